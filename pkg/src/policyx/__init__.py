"""Role-based LLM extraction and evaluation for healthy-food policy corpora."""

from .corpus import (
    CorpusSplit,
    GoldAnnotation,
    PolicyRecord,
    corpus_digest,
    load_corpus,
    save_corpus,
    select_exemplars,
)
from .evaluation import (
    AttributeScores,
    EvalReport,
    FoodScores,
    StrategyScores,
    build_report,
    hamming_loss,
    k_correct_distribution,
    micro_f1,
    render_report,
    score_group,
    score_strategies_exact,
    score_strategies_partial,
)
from .extraction import (
    MISSING,
    Extraction,
    ParsedJson,
    extract_json_snippet,
    parse_role_output,
    read_journal,
    run_baseline,
    run_extraction,
    run_role_based,
)
from .gateway import (
    BackendConfig,
    CompletionRequest,
    CompletionResponse,
    LlmGateway,
    ResponseCache,
    cache_key,
)
from .prompting import (
    MethodId,
    PromptTemplate,
    RenderedPrompt,
    RoleId,
    TemplateSet,
    render_baseline_prompt,
    render_role_prompt,
)
from .taxonomy import (
    UNRECOGNIZED,
    FoodCategory,
    LegalStrategy,
    PolicyType,
    StrategyGroup,
    Taxonomy,
    canonicalize_policy_type,
    canonicalize_state,
    canonicalize_strategy,
    default_taxonomy,
)

__version__ = "0.1.0"
