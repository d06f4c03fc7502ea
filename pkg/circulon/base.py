"""Dataclass-based configuration: entries, sections and full configurations."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import Field, dataclass, field, fields
from os import PathLike
from pathlib import Path
from typing import (
    Any,
    Callable,
    ContextManager,
    Dict,
    Generic,
    Mapping,
    Optional,
    Type,
    TypeVar,
    Union,
    get_type_hints,
)

import toml

from . import _internal
from .error import ConfigError

T = TypeVar("T")

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Entry(Generic[T]):
    """Metadata of a configuration option.

    Attributes:
        val: default value. Use `val_toml` or `val_factory` instead if it is
            mutable.
        val_toml: default value as a TOML value, turned into the actual
            default by `from_toml`.
        val_factory: function producing the default value. Use
            `val_factory=lambda: None` for a default of `None`.
        doc: short description of the option.
        unit: laboratory unit of the value, shown in the CLI help.
        check: predicate on the cast value. A rejected value raises
            [`ConfigError`][circulon.error.ConfigError].
        from_toml: function casting a TOML value (or a command line string)
            to the type of the entry. It should raise `TypeError` or
            `ValueError` on input it cannot handle.
        to_toml: function casting the value to something TOML can represent,
            used by [`ConfigBase.to_file_`][circulon.base.ConfigBase.to_file_].
        in_file: whether the option can be set in the config file.
        in_cli: whether the option is a command line argument.
        cli_short: short version of the command line argument.
        cli_kwargs: extra keyword arguments of
            `argparse.ArgumentParser.add_argument`.
    """

    val: Optional[T] = None
    val_toml: Optional[object] = None
    val_factory: Optional[Callable[[], T]] = None
    doc: str = ""
    unit: str = ""
    check: Optional[Callable[[T], bool]] = None
    from_toml: Optional[Callable[[object], T]] = None
    to_toml: Optional[Callable[[T], object]] = None
    in_file: bool = True
    in_cli: bool = True
    cli_short: Optional[str] = None
    cli_kwargs: Dict[str, Any] = field(default_factory=dict)

    def field(self) -> T:
        """Produce a `dataclasses.Field` from the entry."""
        n_defaults = sum(
            default is not None
            for default in (self.val, self.val_toml, self.val_factory)
        )
        if n_defaults != 1:
            raise ValueError(
                "Exactly one of val, val_toml, and val_factory should be set."
            )

        if self.val is not None:
            return field(default=self.val, metadata=dict(circulon_entry=self))
        if self.val_factory is not None:
            func = self.val_factory
        else:
            if self.from_toml is None:
                raise ValueError("Need `from_toml` to use val_toml")

            def func() -> T:
                # TYPE SAFETY: previous checks ensure this is valid
                return self.from_toml(self.val_toml)  # type: ignore

        return field(default_factory=func, metadata=dict(circulon_entry=self))


def entry(
    val: Optional[T] = None,
    val_toml: Optional[object] = None,
    val_factory: Optional[Callable[[], T]] = None,
    doc: str = "",
    unit: str = "",
    check: Optional[Callable[[T], bool]] = None,
    from_toml: Optional[Callable[[object], T]] = None,
    to_toml: Optional[Callable[[T], object]] = None,
    in_file: bool = True,
    in_cli: bool = True,
    cli_short: Optional[str] = None,
    cli_kwargs: Optional[Dict[str, Any]] = None,
) -> T:
    """Shorthand notation for `Entry(...).field()`."""
    return Entry(
        val=val,
        val_toml=val_toml,
        val_factory=val_factory,
        doc=doc,
        unit=unit,
        check=check,
        from_toml=from_toml,
        to_toml=to_toml,
        in_file=in_file,
        in_cli=in_cli,
        cli_short=cli_short,
        cli_kwargs=cli_kwargs if cli_kwargs is not None else {},
    ).field()


@dataclass(frozen=True)
class Meta(Generic[T]):
    """Metadata gathered for one option of a section.

    Attributes:
        fld: the underlying `dataclasses.Field`.
        entry: the [`Entry`][circulon.base.Entry] attached to the field.
        type_hint: type hint resolved as a class, `object` if it is not one.
    """

    fld: Field[T]
    entry: Entry[T]
    type_hint: Type[T]


@dataclass
class Section:
    """Base class for a configuration section.

    Subclasses implementing `__post_init__` should call this one.
    """

    @classmethod
    def _type_hints(cls) -> Dict[str, Any]:
        return get_type_hints(cls)

    def __post_init__(self) -> None:
        self._circulon_meta: Dict[str, Meta] = {}
        thints = self._type_hints()
        for fld in fields(self):
            meta = fld.metadata.get("circulon_entry", Entry())
            thint = thints[fld.name]
            if not isinstance(thint, type):
                thint = object
            self._circulon_meta[fld.name] = Meta(fld, meta, thint)
            current_val = getattr(self, fld.name)
            if not isinstance(current_val, thint):
                self.cast_and_set_(fld.name, current_val)

    def meta_(self, entry_name: str) -> Meta:
        """Metadata for the given entry name."""
        return self._circulon_meta[entry_name]

    def has_(self, entry_name: str) -> bool:
        """Whether the section defines the given entry."""
        return entry_name in self._circulon_meta

    def cast_and_set_(self, field_name: str, value_to_cast: object) -> None:
        """Cast a value to the type of an option and set it.

        `Entry.from_toml` is used when present, the type hint is called
        otherwise if the value does not already have the right type. The
        `Entry.check` predicate is then applied to the result.
        """
        meta = self._circulon_meta[field_name]
        if meta.entry.from_toml is not None:
            value = meta.entry.from_toml(value_to_cast)
        elif not isinstance(value_to_cast, meta.type_hint):
            try:
                value = meta.type_hint(value_to_cast)
            except Exception:
                raise TypeError(
                    f"Couldn't cast {value_to_cast!r} to a {meta.type_hint}, "
                    f"you might need to specify `from_toml` for {field_name}."
                )
        else:
            value = value_to_cast
        if meta.entry.check is not None and not meta.entry.check(value):
            raise ConfigError(f"{field_name}: invalid value {value!r}")
        setattr(self, field_name, value)

    def context_(self, **options: Any) -> ContextManager[None]:
        """Enter a context with locally changed option values."""
        return _internal.SectionContext(self, options)

    def update_from_dict_(self, options: Mapping[str, object]) -> None:
        """Update options from a mapping, casting values as needed."""
        for opt, val in options.items():
            self.cast_and_set_(opt, val)

    def to_dict_(self) -> Dict[str, Any]:
        """TOML representation of the options that can live in a file."""
        out = {}
        for fld in fields(self):
            entry = self.meta_(fld.name).entry
            if not entry.in_file:
                continue
            value = getattr(self, fld.name)
            if entry.to_toml is not None:
                value = entry.to_toml(value)
            out[fld.name] = value
        return out


TConfig = TypeVar("TConfig", bound="ConfigBase")


@dataclass
class ConfigBase:
    """Base class for a full configuration made of sections."""

    @classmethod
    def _type_hints(cls) -> Dict[str, Any]:
        return get_type_hints(cls)

    @classmethod
    def default_(cls: Type[TConfig]) -> TConfig:
        """Create a configuration with default values."""
        thints = cls._type_hints()
        sections = {}
        for fld in fields(cls):
            thint = thints[fld.name]
            if not (isinstance(thint, type) and issubclass(thint, Section)):
                raise TypeError(
                    f"Could not resolve type hint of {fld.name} to a Section "
                    f"(got {thint})"
                )
            sections[fld.name] = thint()
        return cls(**sections)

    def sections_(self) -> Dict[str, Section]:
        """Sections of the configuration by name."""
        return {fld.name: getattr(self, fld.name) for fld in fields(self)}

    def update_from_file_(self, path: Union[str, PathLike]) -> None:
        """Update configuration from a TOML file.

        Raises:
            ConfigError: the file is missing, is not valid TOML, contains an
                unknown section or key, or a value that cannot be cast or
                fails its check. The error carries the offending line.
        """
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config file {path}: {err}") from err
        try:
            pars = toml.loads(text)
        except toml.TomlDecodeError as err:
            raise ConfigError(f"{path}: {err.msg}", err.lineno) from err
        sections = self.sections_()
        for sec_name, opts in pars.items():
            if sec_name not in sections or not isinstance(opts, dict):
                raise ConfigError(
                    f"{path}: unknown section [{sec_name}]",
                    _internal.key_line(text, sec_name),
                )
            section = sections[sec_name]
            for opt, val in opts.items():
                line = _internal.key_line(text, sec_name, opt)
                if not section.has_(opt):
                    raise ConfigError(f"{path}: unknown key {sec_name}.{opt}", line)
                if not section.meta_(opt).entry.in_file:
                    logger.warning(
                        "%s: %s.%s cannot be set from a file, ignored",
                        path,
                        sec_name,
                        opt,
                    )
                    continue
                try:
                    section.cast_and_set_(opt, val)
                except (TypeError, ValueError, ConfigError) as err:
                    raise ConfigError(f"{path}: {sec_name}.{opt}: {err}", line) from err

    def update_from_dict_(self, options: Mapping[str, Mapping[str, Any]]) -> None:
        """Update configuration from a dictionary of sections."""
        for sec, opts in options.items():
            section: Section = getattr(self, sec)
            section.update_from_dict_(opts)

    def to_dict_(self) -> Dict[str, Dict[str, Any]]:
        """TOML representation of the configuration, empty sections omitted."""
        out = {name: sec.to_dict_() for name, sec in self.sections_().items()}
        return {name: opts for name, opts in out.items() if opts}

    def digest_(self) -> str:
        """SHA-256 of the canonical TOML dump of the configuration."""
        return hashlib.sha256(toml.dumps(self.to_dict_()).encode()).hexdigest()

    def to_file_(self, path: Union[str, PathLike], exist_ok: bool = True) -> None:
        """Write configuration in a TOML file."""
        path = Path(path)
        if not exist_ok and path.is_file():
            raise RuntimeError(f"{path} already exists")
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as pf:
            toml.dump(self.to_dict_(), pf)
