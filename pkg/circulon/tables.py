"""Headers and summaries of output files.

Every text table starts with a TOML header commented out with `# `, which
carries the provenance of the run: the circulon version and the digest of
the effective configuration.
"""

from __future__ import annotations

import typing
from pathlib import Path

import toml

from . import __version__
from .error import ConfigError

if typing.TYPE_CHECKING:
    from os import PathLike
    from typing import Any, Dict, Mapping, Optional, Union


def provenance(digest: Optional[str] = None) -> Dict[str, Any]:
    """Provenance block embedded in output headers."""
    prov: Dict[str, Any] = dict(software="circulon", version=__version__)
    if digest is not None:
        prov["config_digest"] = digest
    return prov


def comment_header(header: Mapping[str, Any]) -> str:
    """TOML dump of a header, each line commented out."""
    return "\n".join(f"# {line}" for line in toml.dumps(dict(header)).splitlines())


def read_comment_header(path: Union[str, PathLike]) -> Dict[str, Any]:
    """Parse the commented TOML header of a table."""
    path = Path(path)
    lines = path.read_text().splitlines()
    head = "\n".join(line[2:] for line in lines if line.startswith("# "))
    try:
        return toml.loads(head)
    except toml.TomlDecodeError as err:
        raise ConfigError(f"{path}: invalid header, {err.msg}", err.lineno) from err


def write_summary(path: Union[str, PathLike], summary: Mapping[str, Any]) -> None:
    """Write the machine-readable summary of a run."""
    with Path(path).open("w") as fid:
        toml.dump(dict(summary), fid)


def read_summary(path: Union[str, PathLike]) -> Dict[str, Any]:
    return toml.load(Path(path))
