class BridgeError(Exception):
    """Base for everything this package raises on purpose."""


class MappingError(BridgeError):
    """Checkpoint tensors could not be mapped onto the target inventory."""


class DumpError(BridgeError):
    """Fixture dumping could not run the source model as required."""
