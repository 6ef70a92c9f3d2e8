"""Exception types shared across the package."""


class RefsiftError(Exception):
    """Base class for all refsift errors."""

    code = "error"

    def payload(self) -> dict:
        """Machine-readable form used by the CLI --json mode and the API."""
        return {"code": self.code, "message": str(self)}


class StoreError(RefsiftError):
    code = "store"


class StoreLockedError(StoreError):
    code = "store-locked"


class UnknownArticleError(StoreError):
    code = "unknown-article"

    def __init__(self, article_id: str):
        super().__init__(f"unknown article id: {article_id}")
        self.article_id = article_id


class IllegalTransitionError(StoreError):
    code = "illegal-transition"

    def __init__(self, article_id: str, old: str, new: str):
        super().__init__(f"illegal transition for {article_id}: {old} -> {new}")
        self.article_id = article_id
        self.old = old
        self.new = new


class ConfigError(RefsiftError):
    """Raised with every violation found, not just the first."""

    code = "config"

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)

    def payload(self) -> dict:
        return {"code": self.code, "message": str(self), "violations": self.violations}


class SourceError(RefsiftError):
    code = "source"


class RetryableSourceError(SourceError):
    """Transient failure; the caller may retry."""

    code = "source-retryable"

    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class RateLimitedError(RetryableSourceError):
    code = "rate-limited"


class CapabilityError(SourceError):
    code = "capability"


class ScreeningError(RefsiftError):
    code = "screening"


class AnalysisError(RefsiftError):
    code = "analysis"


class ModelError(AnalysisError):
    code = "model"
