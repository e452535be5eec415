"""Zero-shot audio classification via embedding-space diffusion.

A small numpy-based library: a conditional denoiser synthesizes feature
embeddings for unseen classes from their semantic class embeddings, a
compatibility classifier is trained on real seen-class plus synthetic
unseen-class features, and a seeded harness measures unseen top-1 accuracy
against a ranking baseline trained on seen classes alone.
"""

__version__ = "0.1.0"

from .classifier import (
    ClassifierTrainConfig,
    CompatibilityModel,
    batch_logits,
    cross_entropy_loss,
    load_compatibility_model,
    logits,
    predict_top1,
    save_compatibility_model,
    score,
    train_classifier,
    warp_loss,
)
from .diffusion import (
    NOISE_STD,
    NOISE_VARIANCE,
    DiffusionModel,
    DiffusionTrainConfig,
    EpochStats,
    LossComponents,
    LossWeights,
    NoiseSchedule,
    corrupt,
    denoise_forward,
    generate_unseen,
    jitter_class,
    load_diffusion_model,
    loss_components,
    save_diffusion_model,
    total_loss,
    train_diffusion,
)
from .embeddings import (
    ClassEmbedding,
    DatasetStats,
    EmbeddingRecord,
    PartitionSpec,
    SynthConfig,
    builtin_datasets,
    builtin_partitions,
    class_map,
    class_vector,
    dataset_label_universe,
    dataset_stats,
    load_class_embeddings,
    load_feature_table,
    load_partition,
    synth_benchmark,
    write_class_embeddings,
    write_feature_table,
    write_partition,
)
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    FormatError,
    NumericalError,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    ExperimentStageError,
    FileData,
    SyntheticData,
    aggregate,
    config_fingerprint,
    config_from_dict,
    emit_report,
    evaluate_model,
    format_mean_std,
    load_config,
    report_from_dict,
    report_to_dict,
    run_experiment,
    run_single,
)
from .numerics import (
    AdamState,
    Rng,
    adam_step,
    affine_backward,
    affine_forward,
    clip_global_norm,
    dropout,
    finite_diff_check,
    gaussian_sample,
    leaky_relu,
    tanh_act,
)
