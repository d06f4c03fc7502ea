"""Shorthands to declare common kinds of options."""

from __future__ import annotations

import typing
from pathlib import Path

from . import _internal
from .base import Entry

if typing.TYPE_CHECKING:
    from os import PathLike
    from typing import Optional, Sequence, Union


def path_entry(
    path: Union[str, PathLike],
    doc: str,
    in_file: bool = True,
    in_cli: bool = True,
    cli_short: Optional[str] = None,
) -> Path:
    """Define a path option.

    See [`Entry`][circulon.base.Entry] for the meaning of the arguments.
    """
    return Entry(
        val=Path(path),
        doc=doc,
        # TYPE SAFETY: Path behaves as needed
        from_toml=Path,  # type: ignore
        to_toml=str,
        in_file=in_file,
        in_cli=in_cli,
        cli_short=cli_short,
    ).field()


def choice_entry(default: str, choices: Sequence[str], doc: str) -> str:
    """Define a string option restricted to a set of values.

    The restriction applies to config files as well as to the command line.
    """
    allowed = tuple(choices)
    return Entry(
        val=default,
        doc=doc,
        check=lambda value: value in allowed,
        cli_kwargs=dict(choices=allowed),
    ).field()


def switch_opt(default: bool, shortname: Optional[str], doc: str) -> bool:
    """Define a switchable option.

    On the command line, the option is switched on with `+opt` and off with
    `-opt`.

    Args:
        default: the default value of the switch.
        shortname: short name of the option, `None` for no short name.
        doc: short description of the option.
    """
    return Entry(
        val=default,
        doc=doc,
        cli_short=shortname,
        cli_kwargs=dict(action=_internal.Switch),
    ).field()
