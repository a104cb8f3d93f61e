from __future__ import annotations

import pytest

from nonlocal_lightcone_lab.scenarios import (
    KNOWN_SCENARIOS,
    is_known_scenario,
    list_builtin_scenarios,
    scenario_config,
)


@pytest.mark.parametrize("name", sorted(KNOWN_SCENARIOS))
def test_every_preset_validates(name: str) -> None:
    cfg = scenario_config(name, points=16)
    assert cfg.name == name
    assert cfg.lattice.points_per_axis == 16
    assert cfg.checks


def test_preset_lookup_is_case_insensitive() -> None:
    assert is_known_scenario("  Free-Lightcone ")
    assert scenario_config("FREE-LIGHTCONE").name == "free-lightcone"


def test_unknown_preset_raises_key_error() -> None:
    assert not is_known_scenario("nope")
    with pytest.raises(KeyError, match="unknown scenario preset"):
        scenario_config("nope")


def test_free_lightcone_carries_the_full_check_suite() -> None:
    cfg = scenario_config("free-lightcone")
    kinds = [c.kind for c in cfg.checks]
    assert len(kinds) == 8
    assert kinds[0] == "speed_bounds"
    assert "lightcone_decay" in kinds
    assert cfg.check("decay").fit_window == (5.0, 20.0)


def test_scenario_config_does_not_mutate_the_preset() -> None:
    scenario_config("driven-envelope", points=16)
    assert KNOWN_SCENARIOS["driven-envelope"].config["lattice"]["points_per_axis"] == 128
    assert "name" not in KNOWN_SCENARIOS["driven-envelope"].config


def test_list_builtin_scenarios_has_one_row_per_preset() -> None:
    text = list_builtin_scenarios()
    lines = text.splitlines()
    assert lines[0].startswith("name")
    assert len(lines) == len(KNOWN_SCENARIOS) + 1
    for name in KNOWN_SCENARIOS:
        assert any(line.startswith(name) for line in lines[1:])


def test_free_lightcone_main_inequality_covers_the_symmetry_variants() -> None:
    main = scenario_config("free-lightcone").check("main")
    assert list(main.variants) == ["reflect", "shift"]
    assert main.shift_b == 1.0


def test_acceptance_preset_runs_to_t_fifty_with_a_refined_decay_fit() -> None:
    cfg = scenario_config("acceptance")
    assert cfg.lattice.points_per_axis == 1024
    assert cfg.dynamics.t_max == 50.0
    assert [c.kind for c in cfg.checks] == ["envelope", "main_inequality", "lightcone_decay", "strichartz", "markov"]
    decay = cfg.check("decay")
    assert decay.refine
    assert decay.fit_window == (5.0, 50.0)
    assert list(cfg.check("main").variants) == ["reflect", "shift"]


def test_only_the_driven_rme_check_is_refined_among_the_small_presets() -> None:
    refined = {
        (name, c.name)
        for name in KNOWN_SCENARIOS
        if name != "acceptance"
        for c in scenario_config(name).checks
        if c.refine
    }
    assert refined == {("driven-envelope", "rme")}


def test_expansion_preset_resolves_the_kernel_against_the_transition_width() -> None:
    cfg = scenario_config("expansion-slope")
    spacing = 2.0 * cfg.lattice.half_width / cfg.lattice.points_per_axis
    assert spacing == pytest.approx(0.01)
    assert cfg.kernel.sigma <= spacing
    assert min(cfg.check("right").scales) * cfg.cutoff.delta > 100 * cfg.kernel.sigma
