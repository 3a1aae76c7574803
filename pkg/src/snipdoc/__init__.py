"""snipdoc: mine README code snippets, classify their descriptions with an
LLM, and score generated descriptions against the originals."""

from .corpus import (
    MalformedLine,
    SampleSpec,
    SnippetRecord,
    draw_sample,
    load_corpus,
    parse_readme,
    sample_size,
    save_corpus,
)
from .gateway import BackendConfig, CompletionResult, Gateway, MockBackend, complete, embed
from .pipelines import (
    ClassifiedCorpus,
    GenerationOutcome,
    classify_corpus,
    generate_and_score,
)
from .prompts import (
    DecodeParams,
    PromptBundle,
    build_classification_prompt,
    build_generation_prompt,
)
from .reports import AgreementResult, DistributionReport, cohen_kappa, distribution, emit_report
from .similarity import (
    ScoreDistribution,
    SimilarityScore,
    TokenEmbeddingSet,
    bertscore,
    cosine,
    score_distribution,
    tokenize,
)
from .taxonomy import (
    Category,
    DescriptionLabel,
    FormatViolation,
    LabelSource,
    ParseOutcome,
    Refusal,
    Subtype,
    category_of,
    parse_llm_classification,
)

__all__ = [
    "AgreementResult",
    "BackendConfig",
    "Category",
    "ClassifiedCorpus",
    "CompletionResult",
    "DecodeParams",
    "DescriptionLabel",
    "DistributionReport",
    "FormatViolation",
    "Gateway",
    "GenerationOutcome",
    "LabelSource",
    "MalformedLine",
    "MockBackend",
    "ParseOutcome",
    "PromptBundle",
    "Refusal",
    "SampleSpec",
    "ScoreDistribution",
    "SimilarityScore",
    "SnippetRecord",
    "Subtype",
    "TokenEmbeddingSet",
    "bertscore",
    "build_classification_prompt",
    "build_generation_prompt",
    "category_of",
    "classify_corpus",
    "cohen_kappa",
    "complete",
    "cosine",
    "distribution",
    "draw_sample",
    "embed",
    "emit_report",
    "generate_and_score",
    "load_corpus",
    "parse_llm_classification",
    "parse_readme",
    "sample_size",
    "save_corpus",
    "score_distribution",
    "tokenize",
]
