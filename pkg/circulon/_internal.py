"""Internal helpers of the configuration layer."""

from __future__ import annotations

import argparse
import re
import typing

if typing.TYPE_CHECKING:
    from argparse import ArgumentParser, Namespace
    from typing import Any, Dict, Mapping, Optional, Type

    from .base import Section


class Switch(argparse.Action):
    """Store True or False depending on the prefix of the flag.

    `+flag` switches the option on, `-flag` switches it off. Use
    [`switch_opt`][circulon.tools.switch_opt] to declare such options.
    """

    def __call__(
        self,
        parser: ArgumentParser,
        namespace: Namespace,
        values: Any,
        option_string: Optional[str] = None,
    ) -> None:
        if option_string is None:
            raise ValueError("Switch action cannot handle positional arguments.")
        setattr(namespace, self.dest, option_string.startswith("+"))


class SectionContext:
    """Context manager temporarily overriding option values.

    It is reusable but not reentrant.

    Args:
        section: configuration section to be managed.
        options: option values to use within the context.
    """

    def __init__(self, section: Section, options: Mapping[str, Any]):
        self._section = section
        self._options = options
        self._saved: Dict[str, Any] = {}

    def __enter__(self) -> None:
        self._saved = {opt: getattr(self._section, opt) for opt in self._options}
        self._section.update_from_dict_(self._options)

    def __exit__(self, e_type: Optional[Type[BaseException]], *_: Any) -> bool:
        self._section.update_from_dict_(self._saved)
        return e_type is None


_HEADER = re.compile(r"^\s*\[\s*([^\]\s]+)\s*\]")


def key_line(text: str, section: str, key: Optional[str] = None) -> Optional[int]:
    """Line (1-based) where a section header or a key appears in TOML text.

    Only plain `[section]` headers and `key = value` lines are recognized,
    which covers the flat layout of circulon configuration files.
    """
    current = None
    key_re = re.compile(rf"^\s*[\"']?{re.escape(key)}[\"']?\s*=") if key else None
    for lineno, line in enumerate(text.splitlines(), start=1):
        match = _HEADER.match(line)
        if match:
            current = match.group(1).strip("\"'")
            if key_re is None and current == section:
                return lineno
            continue
        if key_re is not None and current == section and key_re.match(line):
            return lineno
    return None
