from __future__ import annotations

from pathlib import Path

from nonlocal_lightcone_lab.plots import envelope_plot, tail_mass_plot


def test_tail_mass_plot_is_reproducible(tmp_path: Path) -> None:
    times = [0.0, 1.0, 2.0, 4.0, 8.0]
    values = [0.0, 0.1, 0.03, 0.008, 0.002]
    a = tail_mass_plot(times, values, 2, tmp_path / "a" / "tail.svg")
    b = tail_mass_plot(times, values, 2, tmp_path / "b" / "tail.svg")
    text = a.read_text(encoding="utf-8")
    assert text.startswith("<?xml")
    assert "n=2; points=4" in text
    assert a.read_bytes() == b.read_bytes()


def test_tail_mass_plot_handles_an_empty_tail(tmp_path: Path) -> None:
    out = tail_mass_plot([0.0, 1.0], [0.0, 0.0], 2, tmp_path / "zero.svg")
    assert "points=0" in out.read_text(encoding="utf-8")


def test_envelope_plot_records_the_gap(tmp_path: Path) -> None:
    out = envelope_plot([0.0, 1.0, 2.0], [0.1, 0.2, 0.25], [0.5, 0.5, 0.5], tmp_path / "env.svg")
    assert "max_gap=0.4" in out.read_text(encoding="utf-8")
