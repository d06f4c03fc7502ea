"""Command line interface."""

from __future__ import annotations

import argparse
import copy
import logging
import sys
import typing
import warnings
from dataclasses import fields
from types import MappingProxyType

from . import _internal, error

if typing.TYPE_CHECKING:
    from argparse import ArgumentParser, Namespace
    from typing import Any, Dict, List, Mapping, Optional

    from .base import ConfigBase, Section
    from .config import Config

logger = logging.getLogger(__name__)


def _names(section: Section, option: str) -> List[str]:
    """Command line strings of a given option."""
    entry = section.meta_(option).entry
    option = option.replace("_", "-")
    if entry.cli_kwargs.get("action") is _internal.Switch:
        names = [f"-{option}", f"+{option}"]
        if entry.cli_short is not None:
            names.extend((f"-{entry.cli_short}", f"+{entry.cli_short}"))
    else:
        names = [f"--{option}"]
        if entry.cli_short is not None:
            names.append(f"-{entry.cli_short}")
    return names


def _help(section: Section, option: str) -> str:
    entry = section.meta_(option).entry
    text = entry.doc
    if entry.unit:
        text += f" [{entry.unit}]"
    value = getattr(section, option)
    if entry.to_toml is not None:
        value = entry.to_toml(value)
    return f"{text} (default: {value!r})".replace("%", "%%")


class Subcmd:
    """Metadata of a subcommand.

    Attributes:
        help: short description of the subcommand.
        sections: configuration sections exposed on its command line.
        defaults: values set in the parsed namespace for this subcommand.
    """

    def __init__(self, help_msg: str, *sections: str, **defaults: Any):
        self.help = help_msg
        self.sections = sections
        self.defaults = defaults


class CLIManager:
    """Build a command line parser from a configuration and apply it.

    Options are only set when passed explicitly, so that the precedence is
    defaults, then the config file named by `file_option`, then flags.

    Args:
        config_: the [`ConfigBase`][circulon.base.ConfigBase] holding the
            option definitions.
        common_: description of the tool and sections shared by every
            subcommand.
        bare_: sections used when the tool is called without subcommand.
        file_option: option holding the path of a config file to load before
            applying the other flags.
        subcmds: subcommands, keyed by their name. Names may contain hyphens.
    """

    def __init__(
        self,
        config_: ConfigBase,
        common_: Optional[Subcmd] = None,
        bare_: Optional[Subcmd] = None,
        file_option: Optional[str] = None,
        **subcmds: Subcmd,
    ):
        self._conf = config_
        self._subcmds = {}
        for sub_name, sub_meta in subcmds.items():
            if sub_name.replace("-", "_").isidentifier():
                self._subcmds[sub_name] = sub_meta
            else:
                raise error.SubcmdError(sub_name)
        self._common = common_ if common_ is not None else Subcmd("")
        self._bare = bare_
        self._file_option = file_option
        # [command][option] = section
        self._opt_cmds: Dict[str, Dict[str, str]] = {}
        # [option] = section, for the bare command
        self._opt_bare: Dict[str, str] = {}
        if self.bare is not None:
            self._cmd_opts_solver(None)
        for cmd_name in self.subcmds:
            self._opt_cmds[cmd_name] = {}
            self._cmd_opts_solver(cmd_name)
        self._parser = self._build_parser()

    @property
    def common(self) -> Subcmd:
        """Subcmd describing sections common to all subcommands."""
        return self._common

    @property
    def bare(self) -> Optional[Subcmd]:
        """Subcmd used when the tool is invoked without subcommand."""
        return self._bare

    @property
    def subcmds(self) -> Mapping[str, Subcmd]:
        """Subcommands description."""
        return MappingProxyType(self._subcmds)

    @property
    def parser(self) -> ArgumentParser:
        return self._parser

    def sections_list(self, cmd: Optional[str] = None) -> List[str]:
        """Config sections exposed by a command.

        Args:
            cmd: command name, `None` or `""` for the bare command.
        """
        sections = list(self.common.sections)
        if not cmd:
            if self.bare is not None:
                sections.extend(self.bare.sections)
                return sections
            return []
        sections.extend(self.subcmds[cmd].sections)
        if hasattr(self._conf, cmd) and cmd not in sections:
            sections.append(cmd)
        return sections

    def _cmd_opts_solver(self, cmd_name: Optional[str]) -> None:
        """Map the options of one command to their section."""
        cmd_dict = self._opt_cmds[cmd_name] if cmd_name else self._opt_bare
        for sct in reversed(self.sections_list(cmd_name)):
            section: Section = getattr(self._conf, sct)
            for fld in fields(section):
                opt = fld.name
                if not section.meta_(opt).entry.in_cli:
                    continue
                if opt not in cmd_dict:
                    cmd_dict[opt] = sct
                else:
                    warnings.warn(
                        f"Command <{cmd_name}>: {sct}.{opt} shadowed by "
                        f"{cmd_dict[opt]}.{opt}",
                        error.CirculonWarning,
                        stacklevel=4,
                    )

    def _add_options_to_parser(
        self, opts_dict: Mapping[str, str], parser: ArgumentParser
    ) -> None:
        groups = {}
        for opt, sct in opts_dict.items():
            section: Section = getattr(self._conf, sct)
            if sct not in groups:
                group_doc = section.__doc__ or type(section).__name__
                groups[sct] = parser.add_argument_group(
                    group_doc.splitlines()[0].strip(".")
                )
            entry = section.meta_(opt).entry
            kwargs = copy.deepcopy(entry.cli_kwargs)
            if kwargs.get("action") is _internal.Switch:
                kwargs.update(nargs=0)
            kwargs.update(help=_help(section, opt), default=argparse.SUPPRESS)
            groups[sct].add_argument(*_names(section, opt), **kwargs)

    def _build_parser(self) -> ArgumentParser:
        main_parser = argparse.ArgumentParser(
            description=self.common.help, prefix_chars="-+"
        )
        self._add_options_to_parser(self._opt_bare, main_parser)
        main_parser.set_defaults(**self.common.defaults)
        if self.bare is not None:
            main_parser.set_defaults(**self.bare.defaults)

        subparsers = main_parser.add_subparsers(dest="circulon_sub_name")
        for cmd_name, meta in self.subcmds.items():
            sub_parser = subparsers.add_parser(
                cmd_name, prefix_chars="+-", help=meta.help, description=meta.help
            )
            self._add_options_to_parser(self._opt_cmds[cmd_name], sub_parser)
            sub_parser.set_defaults(**meta.defaults)
        return main_parser

    def parse_args(self, arglist: Optional[List[str]] = None) -> Namespace:
        """Parse arguments and update options accordingly.

        Args:
            arglist: arguments to parse, `sys.argv[1:]` if None.

        Returns:
            the namespace returned by `argparse.ArgumentParser`.

        Raises:
            ConfigError: the config file or a flag value is invalid.
        """
        args = self._parser.parse_args(args=arglist)
        sub_cmd = getattr(args, "circulon_sub_name", None)
        cmd_dict = self._opt_cmds[sub_cmd] if sub_cmd else self._opt_bare
        given = {opt: sct for opt, sct in cmd_dict.items() if hasattr(args, opt)}
        file_opt = self._file_option
        if file_opt is not None and file_opt in given:
            self._set(given.pop(file_opt), file_opt, getattr(args, file_opt))
            path = getattr(getattr(self._conf, cmd_dict[file_opt]), file_opt)
            if path is not None:
                self._conf.update_from_file_(path)
        for opt, sct in given.items():
            self._set(sct, opt, getattr(args, opt))
        return args

    def _set(self, sct: str, opt: str, value: object) -> None:
        section: Section = getattr(self._conf, sct)
        try:
            section.cast_and_set_(opt, value)
        except (TypeError, ValueError, error.ConfigError) as err:
            flag = _names(section, opt)[0]
            raise error.ConfigError(f"{flag}: {err}") from err


def build_cli(conf: ConfigBase) -> CLIManager:
    """Command line interface of circulon bound to a configuration."""
    return CLIManager(
        conf,
        common_=Subcmd(
            "Simulation and optimal control of Rydberg circularization.", "output"
        ),
        file_option="config",
        **{
            "build-model": Subcmd("assemble and save the basis model", "atom"),
            "propagate": Subcmd(
                "propagate the initial state under a pulse", "atom", "states", "pulse"
            ),
            "optimize": Subcmd(
                "optimize a pulse with Krotov's method", "atom", "states", "pulse"
            ),
            "noise-sweep": Subcmd(
                "fidelity under RF noise, DC offsets and coarse graining",
                "atom",
                "states",
                "pulse",
                "noise",
            ),
            "qsl-sweep": Subcmd(
                "unconstrained optimizations at decreasing durations",
                "atom",
                "states",
                "pulse",
                "optimize",
                "qsl",
            ),
            "demodulate": Subcmd(
                "envelope of a pulse relative to its carrier", "pulse"
            ),
            "config": Subcmd(
                "write the effective configuration",
                "atom",
                "states",
                "pulse",
                "optimize",
                "noise",
                "qsl",
            ),
        },
    )


def setup_logging(conf: Config) -> None:
    """Log to stderr and to circulon.log in the output directory."""
    out = conf.output.out
    out.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=conf.output.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(out / "circulon.log"),
        ],
        force=True,
    )
    logging.captureWarnings(True)


def main(arglist: Optional[List[str]] = None) -> int:
    """Entry point of the `circulon` command.

    Returns:
        0 on success, 2 on configuration errors, 3 on numerical failures and
        4 when a required convergence is not reached.
    """
    from . import commands
    from .config import Config

    conf = Config.default_()
    climan = build_cli(conf)
    try:
        args = climan.parse_args(arglist)
        conf.check_()
    except error.ConfigError as err:
        print(f"circulon: configuration error: {err}", file=sys.stderr)
        return 2
    sub_cmd = args.circulon_sub_name
    if sub_cmd is None:
        climan.parser.print_help()
        return 2
    setup_logging(conf)
    try:
        return commands.COMMANDS[sub_cmd](conf)
    except (error.ConfigError, error.SubcmdError, error.GridMismatchError) as err:
        logger.error("%s", err)
        return 2
    except ValueError as err:
        logger.error("invalid setting: %s", err)
        return 2
    except error.CirculonError as err:
        logger.error("%s: %s", type(err).__name__, err)
        return 3
