class HMCError(Exception):
    pass


class ConfigurationError(HMCError, ValueError):
    pass


class AddressRangeError(HMCError, ValueError):
    pass


class InvalidSizeError(HMCError, ValueError):
    pass


class ProtocolError(HMCError):
    pass


class ThermalShutdown(HMCError):
    """Raised when traffic is offered to a device halted by a thermal failure."""
