from __future__ import annotations

import logging
from shlex import split
from typing import TYPE_CHECKING, Iterator

import numpy as np
import pytest

from circulon import pulse, stark, tables
from circulon.cli import main

if TYPE_CHECKING:
    from pathlib import Path

SHORT_PULSE = "--t-stop 20 --edge 2 --dt 0.05"


@pytest.fixture(autouse=True)
def reset_logging() -> Iterator[None]:
    yield
    root = logging.getLogger()
    for handler in root.handlers[:]:
        root.removeHandler(handler)
        handler.close()
    logging.captureWarnings(False)


@pytest.fixture(scope="module")
def hydrogen_out(tmp_path_factory: pytest.TempPathFactory) -> Path:
    out = tmp_path_factory.mktemp("model")
    args = f"build-model --species hydrogen --n 12 --e-dc 1.0 --threads 1 --out {out}"
    assert main(split(args)) == 0
    return out


def test_build_model(hydrogen_out: Path) -> None:
    model = stark.BasisModel.load(hydrogen_out / "model.npz")
    assert model.dim == 23
    summary = tables.read_summary(hydrogen_out / "summary.toml")
    assert summary["command"] == "build-model"
    assert summary["software"] == "circulon"
    assert summary["dim"] == 23
    assert summary["pivots"] == 12
    assert "config_digest" in summary
    prov = stark.bundle_provenance(hydrogen_out / "model.npz")
    assert prov["config_digest"] == summary["config_digest"]
    assert prov["version"] == summary["version"]
    assert (hydrogen_out / "circulon.log").is_file()


def test_propagate(hydrogen_out: Path, tmp_path: Path) -> None:
    model = hydrogen_out / "model.npz"
    args = f"propagate --model-file {model} {SHORT_PULSE} --out {tmp_path}"
    assert main(split(args)) == 0
    summary = tables.read_summary(tmp_path / "summary.toml")
    assert 0.0 <= summary["fidelity"] <= 1.0
    assert 0.0 <= summary["leakage"] <= 1.0
    header = tables.read_comment_header(tmp_path / "trajectory.txt")
    assert header["kind"] == "trajectory"
    wave = pulse.read_waveform(tmp_path / "pulse.txt")
    assert wave.size == 401


def test_demodulate(tmp_path: Path) -> None:
    args = f"demodulate --t-stop 20 --edge 8 --dt 0.05 --amplitude 20 --out {tmp_path}"
    assert main(split(args)) == 0
    env = pulse.read_envelope(tmp_path / "envelope.txt")
    assert env.size == 401
    summary = tables.read_summary(tmp_path / "summary.toml")
    assert summary["peak_in_phase_mv_per_cm"] == pytest.approx(20.0, rel=1e-2)
    assert summary["peak_quadrature_mv_per_cm"] < 0.2


def test_config_cmd(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    assert main(split(f"config --n 30 --out {tmp_path}")) == 0
    path = tmp_path / "config.toml"
    assert capsys.readouterr().out.strip() == str(path)
    content = tables.read_summary(path)
    assert content["atom"]["n"] == 30
    assert "config" not in content["output"]


def test_config_file(tmp_path: Path) -> None:
    cfile = tmp_path / "run.toml"
    cfile.write_text("[atom]\nn = 20\n")
    out = tmp_path / "out"
    assert main(split(f"config -c {cfile} --out {out}")) == 0
    assert tables.read_summary(out / "config.toml")["atom"]["n"] == 20


def test_invalid_n(tmp_path: Path) -> None:
    assert main(split(f"build-model --n 1 --out {tmp_path}")) == 2


def test_unknown_key(tmp_path: Path) -> None:
    cfile = tmp_path / "run.toml"
    cfile.write_text("[atom]\nspin = 3\n")
    assert main(split(f"config -c {cfile} --out {tmp_path}")) == 2


def test_no_subcommand(capsys: pytest.CaptureFixture) -> None:
    assert main([]) == 2
    assert "usage" in capsys.readouterr().out


def test_missing_state(hydrogen_out: Path, tmp_path: Path) -> None:
    model = hydrogen_out / "model.npz"
    args = f"propagate --model-file {model} --initial 15 {SHORT_PULSE} --out {tmp_path}"
    assert main(split(args)) == 2


def test_optimize_not_converged(hydrogen_out: Path, tmp_path: Path) -> None:
    model = hydrogen_out / "model.npz"
    args = (
        f"optimize --model-file {model} {SHORT_PULSE} --max-iter 1 "
        f"+require-converged --out {tmp_path}"
    )
    assert main(split(args)) == 4
    summary = tables.read_summary(tmp_path / "summary.toml")
    assert summary["status"] == "max_iter"
    assert summary["iterations"] == 1
    rows = np.loadtxt(tmp_path / "iterations.txt", comments="#", ndmin=2)
    assert rows.shape[0] == 2
    assert (tmp_path / "optimize.npz").is_file()


def test_edges_longer_than_pulse(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    args = f"demodulate --t-stop 20 --edge 15 --out {tmp_path}"
    assert main(split(args)) == 2
    assert "edges of 15" in capsys.readouterr().err
    assert not (tmp_path / "envelope.txt").exists()


def test_invalid_setting(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch, caplog: pytest.LogCaptureFixture
) -> None:
    from circulon import commands

    def reject(conf: object) -> int:
        raise ValueError("cutoff must be positive")

    monkeypatch.setitem(commands.COMMANDS, "demodulate", reject)
    assert main(split(f"demodulate --out {tmp_path}")) == 2
    assert "invalid setting: cutoff must be positive" in caplog.text


def test_runaway_optimization(hydrogen_out: Path, tmp_path: Path) -> None:
    model = hydrogen_out / "model.npz"
    args = (
        f"optimize --model-file {model} {SHORT_PULSE} --max-iter 3 "
        f"--lambda-a 1e-30 --out {tmp_path}"
    )
    assert main(split(args)) == 3
    assert (tmp_path / "optimize.dump.npz").is_file()
