from typing import Literal

from tasksmith.exceptions import TasksmithError

BackendErrorReason = Literal["timeout", "http_status", "malformed_response", "unreachable"]


class GatewayError(TasksmithError):
    pass


class BackendNotFoundError(GatewayError):
    def __init__(self, backend_id: str):
        super().__init__(f"Backend '{backend_id}' is not registered.")


class BackendError(GatewayError):
    def __init__(self, backend_id: str, reason: BackendErrorReason, message: str, status_code: int | None = None):
        self.backend_id = backend_id
        self.reason = reason
        self.status_code = status_code
        super().__init__(f"[{backend_id}] {reason}: {message}")

    @property
    def retryable(self) -> bool:
        if self.reason in ("timeout", "unreachable"):
            return True
        if self.reason == "http_status":
            return self.status_code is None or self.status_code == 429 or self.status_code >= 500
        return False


class UnsupportedByBackend(GatewayError):
    def __init__(self, backend_id: str, operation: str):
        super().__init__(f"Backend '{backend_id}' does not support '{operation}'.")


class EmptyText(GatewayError, ValueError):
    pass
