"""Exceptions raised by the chain auditor."""


class ChainAuditError(Exception):
    pass


class SnapshotError(ChainAuditError):
    pass


class EmptySnapshotError(SnapshotError, ValueError):
    """A snapshot file held no well-formed artifact records."""

    def __init__(self, path, skipped=0):
        super().__init__(f"Snapshot {path} has no well-formed records ({skipped} malformed lines skipped)")
        self.path = path
        self.skipped = skipped


class DuplicateArtifactError(SnapshotError):
    def __init__(self, platform, kind, artifact_id):
        super().__init__(f"Duplicate {platform}/{kind} artifact id: {artifact_id}")
        self.artifact_id = artifact_id


class ConfigError(ChainAuditError):
    pass


class StageDependencyError(ChainAuditError):
    """A stage was asked to run before the stage producing its input."""

    def __init__(self, stage, missing):
        super().__init__(f"Stage '{stage}' needs {missing}, which does not exist. Run the producing stage first.")
        self.stage = stage
        self.missing = missing


class StageError(ChainAuditError):
    def __init__(self, stage, cause):
        super().__init__(f"Stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class DegenerateNoticeError(ChainAuditError, ValueError):
    pass


class RetriableFetchError(ChainAuditError):
    pass


class AuthError(RetriableFetchError):
    pass


class QuotaExhaustedError(RetriableFetchError):
    def __init__(self, message, reset_at=None):
        super().__init__(message)
        self.reset_at = reset_at
