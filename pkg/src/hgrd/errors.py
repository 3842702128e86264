"""Error hierarchy shared by the analysis pipeline."""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from hgrd.minicu.ast import SourceLoc


class HgrdError(Exception):
    """Base class for every diagnostic that aborts analysis (exit code 2)."""

    def __init__(self, message: str, loc: SourceLoc | None = None) -> None:
        self.message = message
        self.loc = loc
        super().__init__(self.render())

    def render(self) -> str:
        kind = type(self).__name__
        if self.loc is None:
            return f"{kind}: {self.message}"
        return f"{self.loc}: {kind}: {self.message}"


class FrontendError(HgrdError):
    pass


class ParseError(FrontendError):
    """Lexical or syntactic error (the grammar's SyntaxError)."""


class UnboundIdentifier(FrontendError):
    def __init__(self, name: str, loc: SourceLoc | None = None) -> None:
        self.name = name
        super().__init__(f"unbound identifier '{name}'", loc)


class NonConstantDivisor(FrontendError):
    def __init__(self, loc: SourceLoc | None = None) -> None:
        super().__init__("divisor of '/' or '%' must be a positive integer literal", loc)


class SemanticError(FrontendError):
    """Well-formed syntax that breaks a typing or placement rule."""


class UnsupportedHostConstruct(HgrdError):
    pass


class UnsupportedKernelExpr(HgrdError):
    pass


class MalformedConstraint(HgrdError):
    pass


class ManifestError(HgrdError):
    pass
