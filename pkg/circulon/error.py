"""Exceptions and warnings raised by circulon."""

from __future__ import annotations

import typing

if typing.TYPE_CHECKING:
    from typing import Any, Mapping, Optional


class CirculonError(Exception):
    """Base class for exceptions raised by circulon."""

    pass


class CirculonWarning(UserWarning):
    """Warning category for warnings issued by circulon."""

    pass


class AliasingWarning(CirculonWarning):
    """Envelope holds energy close to the carrier after demodulation."""

    pass


class StagnationWarning(CirculonWarning):
    """Constraint projection kept increasing the final-time cost."""

    pass


class ConfigError(CirculonError):
    """Raised on invalid configuration content.

    Args:
        msg: description of the problem.
        line: line of the offending key in the config file, if known.

    Attributes:
        line: line of the offending key in the config file, if known.
    """

    def __init__(self, msg: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)


class SubcmdError(CirculonError):
    """Raised when an invalid Subcmd name is requested.

    Args:
        option: invalid subcommand name.

    Attributes:
        option: invalid subcommand name.
    """

    def __init__(self, option: str):
        self.option = option
        super().__init__(f"invalid subcommand name: {option}")


class MissingDefectError(CirculonError):
    """No quantum defect is tabulated for a low-l series."""

    def __init__(self, species: str, l: int, j: float):
        self.l = l
        self.j = j
        super().__init__(f"{species}: no quantum defect for l={l}, j={j}")


class DomainError(CirculonError):
    """An argument lies outside the validity domain of a model."""

    pass


class NumerovError(CirculonError):
    """Radial integration failed.

    Attributes:
        diagnostics: grid bounds, step and cut information.
    """

    def __init__(self, msg: str, diagnostics: Mapping[str, Any]):
        self.diagnostics = dict(diagnostics)
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        super().__init__(f"{msg} ({details})")


class PropagationError(CirculonError):
    """Chebychev propagation lost unitarity.

    Attributes:
        diagnostics: step index, norm drift and expansion parameters.
    """

    def __init__(self, msg: str, diagnostics: Mapping[str, Any]):
        self.diagnostics = dict(diagnostics)
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        super().__init__(f"{msg} ({details})")


class OptimizationError(CirculonError):
    """Krotov iteration produced an unusable update.

    Attributes:
        iteration: index of the failing iteration.
        dump: path of the state dump written before aborting, if any.
        reason: what went wrong.
    """

    def __init__(
        self,
        iteration: int,
        dump: Optional[str] = None,
        reason: str = "non-finite pulse update",
    ):
        self.iteration = iteration
        self.dump = dump
        self.reason = reason
        msg = f"{reason} at iteration {iteration}"
        if dump is not None:
            msg += f", state dumped to {dump}"
        super().__init__(msg)


class TruncationError(CirculonError):
    """The requested basis window cannot hold the requested levels."""

    pass


class ModelSizeError(CirculonError):
    """The requested basis exceeds the configured memory cap.

    Attributes:
        report: basis dimension and estimated memory.
    """

    def __init__(self, report: Mapping[str, Any]):
        self.report = dict(report)
        text = "basis of {dim} states needs {mem_mb:.1f} MB, cap is {cap_mb:.1f} MB"
        super().__init__(text.format(**self.report))


class ScsDirectionError(CirculonError):
    """Bloch vector has zero length, no closest coherent state exists."""

    pass


class GridMismatchError(CirculonError):
    """Pulse and model or state dimensions do not match."""

    pass
