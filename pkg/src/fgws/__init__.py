"""Word-substitution adversarial attacks on text classifiers, and a
frequency-guided detector for them.

The toolkit covers the full loop at desk scale: train a bag-of-words
classifier, attack a held-out subset with four substitution strategies,
tune the detector's frequency threshold and decision margin on validation
data, detect, and quantify everything (effect sizes, Bayes factors,
bootstrap confidence) in a reproducible report.
"""

from .attacks import (
    ATTACK_TAGS,
    AttackCampaign,
    AttackConfig,
    AttackError,
    AttackResources,
    AttackResult,
    attack_genetic,
    attack_prioritized,
    attack_pwws,
    attack_random,
    attack_sequence,
    draw_subset,
    equifrequent_filter,
    replacement_cap,
    run_campaign,
    word_saliency,
)
from .classifier import (
    MODEL_FAMILIES,
    ClassifierError,
    LogisticRegressionModel,
    NaiveBayesModel,
    Prediction,
    accuracy,
    load_model,
    predict,
    save_model,
    train,
)
from .corpus import (
    SPLITS,
    Corpus,
    CorpusError,
    FrequencyTable,
    FrequencyThreshold,
    Sequence,
    build_frequency_table,
    load_corpus,
    load_stopwords,
    percentile_threshold,
    tokenize,
)
from .detector import (
    DEFAULT_Q_GRID,
    DeltaTuning,
    DetectionResult,
    DetectorConfig,
    DetectorError,
    detect_sequences,
    eligible_positions,
    fgws_detect,
    fgws_transform,
    gamma_from_scores,
    idempotence_guaranteed,
    nws_detect,
    nws_transform,
    tune_delta,
    tune_gamma,
)
from .lexicon import (
    CandidateSource,
    EmbeddingSpace,
    LexiconError,
    SynonymLexicon,
    candidate_set,
    load_embeddings,
    load_synonyms,
    mean_synonym_count,
    nearest_neighbors,
)
from .lm import LanguageModelError, TrigramLM
from .pipeline import (
    ConfigError,
    PipelineError,
    RunConfig,
    RunManifest,
    config_hash,
    load_manifest,
    load_run_config,
    run_all,
)
from .stats import (
    BayesFactor,
    DetectionMetrics,
    FreqStatsRow,
    StatsError,
    bayes_factor,
    bootstrap_eval,
    cohens_d,
    fpr_sweep,
    frequency_analysis,
    restored_accuracy,
)

__version__ = "0.1.0"

__all__ = [
    "ATTACK_TAGS",
    "AttackCampaign",
    "AttackConfig",
    "AttackError",
    "AttackResources",
    "AttackResult",
    "BayesFactor",
    "CandidateSource",
    "ClassifierError",
    "ConfigError",
    "Corpus",
    "CorpusError",
    "DEFAULT_Q_GRID",
    "DeltaTuning",
    "DetectionMetrics",
    "DetectionResult",
    "DetectorConfig",
    "DetectorError",
    "EmbeddingSpace",
    "FreqStatsRow",
    "FrequencyTable",
    "FrequencyThreshold",
    "LanguageModelError",
    "LexiconError",
    "LogisticRegressionModel",
    "MODEL_FAMILIES",
    "NaiveBayesModel",
    "PipelineError",
    "Prediction",
    "RunConfig",
    "RunManifest",
    "SPLITS",
    "Sequence",
    "StatsError",
    "SynonymLexicon",
    "TrigramLM",
    "accuracy",
    "attack_genetic",
    "attack_prioritized",
    "attack_pwws",
    "attack_random",
    "attack_sequence",
    "bayes_factor",
    "bootstrap_eval",
    "build_frequency_table",
    "candidate_set",
    "cohens_d",
    "config_hash",
    "detect_sequences",
    "draw_subset",
    "eligible_positions",
    "equifrequent_filter",
    "fgws_detect",
    "fgws_transform",
    "fpr_sweep",
    "frequency_analysis",
    "gamma_from_scores",
    "idempotence_guaranteed",
    "load_corpus",
    "load_embeddings",
    "load_manifest",
    "load_model",
    "load_run_config",
    "load_stopwords",
    "load_synonyms",
    "mean_synonym_count",
    "nearest_neighbors",
    "nws_detect",
    "nws_transform",
    "percentile_threshold",
    "predict",
    "replacement_cap",
    "restored_accuracy",
    "run_all",
    "run_campaign",
    "save_model",
    "tokenize",
    "train",
    "tune_delta",
    "tune_gamma",
    "word_saliency",
]
