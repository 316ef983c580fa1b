"""Exception types shared across the grading pipeline."""


class AgpError(Exception):
    """Base class for all pipeline errors."""

    code = "agp_error"


class MalformedConfig(AgpError):
    code = "malformed_config"


class DuplicateTestId(AgpError):
    code = "duplicate_test_id"


class EmptySubmissionDir(AgpError):
    code = "empty_submission_dir"


class AmbiguousSubmission(AgpError):
    code = "ambiguous_submission"


class InvalidCount(AgpError):
    code = "invalid_count"


class UnsupportedLanguage(AgpError):
    code = "unsupported_language"


class SandboxError(AgpError):
    code = "sandbox_error"


class EmptyText(AgpError):
    code = "empty_text"


class NoTokens(AgpError):
    code = "no_tokens"


class ZeroVector(AgpError):
    code = "zero_vector"


class ProviderUnavailable(AgpError):
    code = "provider_unavailable"


class DimensionMismatch(AgpError):
    code = "dimension_mismatch"


class UnknownProblem(AgpError):
    code = "unknown_problem"


class NonNormalizedInput(AgpError):
    code = "non_normalized_input"


class BatchTooSmall(AgpError):
    code = "batch_too_small"


class EmptyBatch(AgpError):
    code = "empty_batch"


class DegenerateNorm(AgpError):
    code = "degenerate_norm"


class NonFiniteLoss(AgpError):
    code = "non_finite_loss"


class MalformedPool(AgpError):
    code = "malformed_pool"


class EmptyPool(AgpError):
    code = "empty_pool"


class EmptyCompletion(AgpError):
    code = "empty_completion"


class TooFewPoints(AgpError):
    code = "too_few_points"


class EmptyTokenList(AgpError):
    code = "empty_token_list"


class NotFound(AgpError):
    code = "not_found"


class InvalidTransition(AgpError):
    code = "invalid_transition"


class MissingEditorText(AgpError):
    code = "missing_editor_text"
