"""prism_forge: compound image degradation synthesis, contrastive distortion
embeddings, and prompt-driven selective restoration."""

from .distortions import (
    CATEGORIES,
    KINDS,
    KIND_TO_CATEGORY,
    DistortionSpec,
    apply,
    apply_chain,
    kinds_to_labels,
    sample_spec,
)
from .dataset import DatasetConfig, Triplet, build_dataset, generate_clean, read_manifest, write_manifest
from .embedding import (
    EncoderParams,
    MlpHead,
    TrainConfig,
    contrastive_loss,
    encode,
    finite_diff_check,
    jaccard_weight,
    label_similarity,
    predict_labels,
    quality_loss,
    to_auto_prompt,
    total_loss,
    train_classifier,
    train_encoder,
)
from .evaluation import (
    LatentDiagnostics,
    MetricReport,
    compositional_pass_rate,
    evaluate_restoration,
    latent_diagnostics,
    multilabel_f1,
    n_sweep,
    prompt_faithfulness,
    psnr,
    ssim,
    tau_sweep,
    weighting_ablation,
)
from .prompts import (
    ParsedPrompt,
    PromptParseError,
    RestorationRequest,
    make_full,
    make_negative,
    make_partial,
    parse_prompt,
    render_prompt,
)
from .restoration import RestorationPlan, auto_restore, invert, plan, restore, restore_sequential
from .rng import DEFAULT_SEED, child_rng, child_seed, make_rng
from .scpm import ScpmParams, init_scpm, scpm_fuse
from .stats import paired_t_test, regularized_incomplete_beta, student_t_cdf

__version__ = "0.1.0"
