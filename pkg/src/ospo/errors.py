"""Exception hierarchy shared across the pipeline."""


class OspoError(Exception):
    pass


class ConfigError(OspoError):
    pass


class ConfigMismatch(ConfigError):
    pass


class StageIncomplete(OspoError):
    pass


class EmptyManifest(OspoError):
    pass


# prompt generation
class PoolExhausted(OspoError):
    pass


class PoolTooSmall(OspoError):
    pass


# perturbation / densification
class NotPerturbable(OspoError):
    pass


class TranscriptParseError(OspoError):
    pass


class BindingViolation(OspoError):
    pass


# backends
class BackendError(OspoError):
    pass


class BackendUnavailable(BackendError):
    pass


class RemoteRejected(BackendError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"remote rejected request with HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class Timeout(BackendError):
    pass


class UnanswerableQuestion(OspoError):
    pass


# scoring / selection / analysis
class EmptyPrompt(OspoError):
    pass


class NoCandidates(OspoError):
    pass


class MismatchedQuestionSets(OspoError):
    pass


class NonFiniteLoss(OspoError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class PromptParseError(OspoError, ValueError):
    pass
