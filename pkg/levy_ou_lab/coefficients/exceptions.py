class CoefficientSyntaxError(ValueError):
    # Raised when a coefficient expression can't be parsed. `offset` is a UTF-8 byte offset into the source.
    def __init__(self, message: str, source: str, offset: int):
        super().__init__(f"{message} at byte {offset} in {source!r}")
        self.source = source
        self.offset = offset


class CoefficientEvalError(ValueError):
    # Raised when an expression evaluates to a division by zero or a non-finite value
    pass
