class RendererError(Exception):
    """Base for everything this package raises on purpose."""


class DataError(RendererError):
    """Dataset missing, malformed, or inconsistent with its manifest."""


class ConfigError(RendererError):
    """Configuration violates an invariant or mismatches a checkpoint."""


class ProtocolError(RendererError):
    """Wire-level problem; code is one of the service's error codes."""

    def __init__(self, code: str, msg: str):
        super().__init__(msg)
        self.code = code
        self.msg = msg
