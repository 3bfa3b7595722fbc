"""
Tests for scenario documents, overrides, the scenario workflow and the CLI
"""

import glob
import json
import os

import pytest

from flexoiga import cli
from flexoiga.errors import ConfigError
from flexoiga.output.writers import read_csv
from flexoiga.scenario_workflow import CSV_COLUMNS, PROFILE_COLUMNS, ScenarioWorkflow, build_geometry, sweep_point
from flexoiga.scenarios import (
    PRESETS,
    list_presets,
    load_preset,
    load_scenarios,
    parse_document,
    parse_overrides,
    validate_scenario,
    variant_scenarios,
)
from flexoiga.settings import Settings

TINY = {
    "name": "tiny",
    "geometry": {"kind": "cantilever", "length": 4e-6, "thickness": 1e-6, "patch_grid": [2, 1]},
    "discretization": {"degree": 2},
    "sweep": {"axis": "tau", "values": [1e8, 1e10]},
    "outputs": {"profile": "eps11_midline", "profile_samples": 5},
}


@pytest.fixture
def tiny_workflow(tmp_path):
    return ScenarioWorkflow(Settings(output_dir=str(tmp_path / "results")))


@pytest.mark.parametrize("name", list_presets())
def test_every_preset_validates(name):
    scn = load_preset(name)
    assert scn.name == name
    assert scn.discretization.degree >= 2
    assert variant_scenarios(scn)


def test_preset_catalogue():
    assert {"two_patch_jump", "kem_validation", "uc_compression", "lattice_bending",
            "converse_actuation", "kem_size_effect"} <= set(PRESETS)
    assert load_preset("two_patch_jump").dg.tau == pytest.approx(4e10)


def test_parse_error_reports_position():
    with pytest.raises(ConfigError) as exc:
        parse_document('{\n  "name": }', "broken.json")
    assert "line 2" in exc.value.diagnostics[0]
    assert "broken.json" in str(exc.value)
    with pytest.raises(ConfigError):
        parse_document("[1, 2]")


def test_parse_document_accepts_lists():
    docs = parse_document(json.dumps({"scenarios": [{"name": "a"}, {"name": "b"}]}))
    assert [d["name"] for d in docs] == ["a", "b"]
    assert parse_document(json.dumps({"name": "single"})) == [{"name": "single"}]


@pytest.mark.parametrize(
    "override, field",
    [
        ({"dg": {"tau": -1.0}}, "dg.tau"),
        ({"dg": {"beta": 0.0}}, "dg.beta"),
        ({"geometry": {"kind": "lattice", "lattice": {"rho": 1.5}}}, "geometry.lattice.rho"),
        ({"discretization": {"degree": 1}}, "discretization.degree"),
        ({"material": {"nu": 0.5}}, "material"),
        ({"outputs": {"profile_samples": 1}}, "outputs.profile_samples"),
        ({"geometry": {"kind": "patches"}}, "geometry"),
        ({"sweep": {"axis": "tau"}}, "sweep"),
        ({"unknown_section": {}}, "unknown_section"),
    ],
)
def test_invalid_documents_name_the_field(override, field):
    with pytest.raises(ConfigError) as exc:
        validate_scenario({"name": "bad", **override})
    assert any(d.startswith(field) for d in exc.value.diagnostics)


def test_parse_overrides():
    overrides = parse_overrides(["dg.tau=1e10", "geometry.patch_grid=[2, 2]", "material.preset=one_d",
                                 "dg.enabled=false"])
    assert overrides == {"dg.tau": 1e10, "geometry.patch_grid": [2, 2], "material.preset": "one_d",
                         "dg.enabled": False}
    with pytest.raises(ConfigError):
        parse_overrides(["dg.tau"])
    with pytest.raises(ConfigError):
        load_preset("two_patch_jump", {"dg..tau": 1.0})
    with pytest.raises(ConfigError):
        load_preset("two_patch_jump", {"dg.tau.value": 1.0})


def test_overrides_apply_before_validation():
    scn = load_preset("two_patch_jump", {"dg.tau": 1e10, "discretization.degree": 2})
    assert scn.dg.tau == 1e10
    assert scn.discretization.degree == 2
    with pytest.raises(ConfigError):
        load_preset("two_patch_jump", {"dg.tau": -5.0})
    with pytest.raises(ConfigError):
        load_preset("no_such_scenario")


def test_extends_merges_with_preset():
    scn = validate_scenario({"extends": "uc_compression", "geometry": {"lattice": {"topology": "UC3"}}})
    assert scn.name == "uc_compression"
    assert scn.geometry.lattice.topology == "UC3"
    assert scn.geometry.lattice.rho == pytest.approx(0.2)
    with pytest.raises(ConfigError):
        validate_scenario({"extends": "nothing"})


def test_plan_expands_variants_and_sweeps(tiny_workflow):
    plan = tiny_workflow.plan(load_preset("two_patch_jump"))
    assert len(plan) == 7
    assert plan[0][0] == "C0" and plan[0][2] is None and not plan[0][1].dg.enabled
    assert [value for label, _, value in plan if label == "DG"] == [0.0, 1e6, 1e8, 1e10, 4e10, 1e12]
    assert len(tiny_workflow.plan(load_preset("lattice_bending"))) == 5


def test_sweep_point_rescales_lattice_thickness():
    scn = load_preset("kem_size_effect")
    _, solid = variant_scenarios(scn)[0]
    point = sweep_point(solid, 4e-6)
    lat = point.geometry.lattice
    assert lat.n_y * lat.b == pytest.approx(4e-6)
    assert lat.a / lat.b == pytest.approx(1.0)


def test_hprime_sets_cantilever_size():
    scn = sweep_point(load_preset("kem_validation"), 5.0)
    _, info = build_geometry(scn.model_copy(update={"discretization": scn.discretization.model_copy(
        update={"refinement": 0, "elements_along": 1, "elements_across": 1})}))
    mat = scn.material.base()
    assert info.height == pytest.approx(5.0 * mat.mu12 / -mat.e21)
    assert info.length == pytest.approx(20.0 * info.height)


def test_kem_validation_stays_in_weak_coupling():
    scn = load_preset("kem_validation")
    mat = scn.material.base()
    # flexoelectric stiffening of the thinnest beam (h' = 1) relative to the elastic energy
    assert 12.0 * mat.e21 ** 2 / (mat.kappa22 * mat.E) < 0.03
    assert min(scn.sweep.values) == 1.0
    assert scn.geometry.aspect >= 20.0
    disc = scn.discretization
    assert disc.refinement == 2
    assert disc.elements_across * 2 ** disc.refinement >= 8


@pytest.mark.parametrize("name", ["uc_compression", "uc_compression_symmetric", "uc_convergence",
                                  "lattice_bending", "converse_actuation", "kem_size_effect"])
def test_lattice_studies_exclude_piezoelectricity(name):
    scn = load_preset(name)
    assert scn.material.mode == "flexo_only"
    for _, variant in variant_scenarios(scn):
        mat = variant.material.build()
        assert not mat.e.any()
        assert mat.mu.any()


@pytest.mark.parametrize("name", ["convergence_2p", "convergence_4p"])
def test_convergence_studies_use_end_traction(name):
    load = load_preset(name).load
    assert load.case == "tip_load"
    assert load.kind == "traction"


def test_load_scenarios_from_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"scenarios": [TINY, {"extends": "two_patch_jump"}]}), encoding="utf-8")
    scenarios = load_scenarios(str(path), overrides={"discretization.degree": 3})
    assert [s.name for s in scenarios] == ["tiny", "two_patch_jump"]
    assert all(s.discretization.degree == 3 for s in scenarios)
    assert [s.name for s in load_scenarios(str(path), name="tiny")] == ["tiny"]
    with pytest.raises(ConfigError):
        load_scenarios(str(path), name="absent")
    with pytest.raises(ConfigError):
        load_scenarios(str(tmp_path / "missing.json"))
    with pytest.raises(ConfigError):
        load_scenarios()


def test_run_writes_deterministic_tables(tiny_workflow, tmp_path):
    scn = validate_scenario(TINY)
    first = tiny_workflow.run_scenario(scn, str(tmp_path / "a"))
    second = tiny_workflow.run_scenario(scn, str(tmp_path / "b"))
    assert len(first.records) == 2
    assert len(first.files) == 2
    for a, b in zip(first.files, second.files):
        with open(a, "rb") as fa, open(b, "rb") as fb:
            assert fa.read() == fb.read()

    rows = read_csv(first.files[0])
    assert list(rows[0]) == CSV_COLUMNS
    assert [float(r["tau"]) for r in rows] == [1e8, 1e10]
    assert all(r["n_interfaces"] == "1" for r in rows)
    assert all(float(r["jump"]) >= 0.0 for r in rows)
    assert all(float(r["residual"]) < 1e-9 for r in rows)
    profile = read_csv(first.files[1])
    assert list(profile[0]) == PROFILE_COLUMNS
    assert len(profile) == 10


def test_run_with_vtk(tiny_workflow, tmp_path):
    scn = validate_scenario({**TINY, "sweep": {"axis": "none"}, "outputs": {"vtk_sampling": 2}})
    result = tiny_workflow.run_scenario(scn, str(tmp_path), vtk=True)
    assert any(path.endswith(".vtk") for path in result.files)


def test_handle_run_reports_errors(tiny_workflow, tmp_path):
    scn = validate_scenario({**TINY, "load": {"case": "compression"}, "geometry": {"kind": "patches", "patches": [
        {"corners": [[0, 0], [1, 0], [1, 1], [0, 1]]}]}, "sweep": {"axis": "none"}})
    ok = tiny_workflow.handle_run(scn, str(tmp_path))
    assert ok["error"] is None and len(ok["records"]) == 1

    bad = validate_scenario({**TINY, "load": {"case": "tip_load", "kind": "traction"}, "geometry": {
        "kind": "patches", "patches": [{"corners": [[0, 0], [1, 0], [0.8, 1], [0, 1]]}]}, "sweep": {"axis": "none"}})
    failed = tiny_workflow.handle_run(bad, str(tmp_path))
    assert failed["records"] == []
    assert failed["error"]


def test_uniform_compression_has_no_coupling(tiny_workflow, tmp_path):
    scn = validate_scenario({
        "name": "null_compression",
        "geometry": {"kind": "lattice", "lattice": {"topology": "SOLID"}},
        "material": {"mode": "flexo_only"},
        "load": {"case": "compression", "deflection_ratio": 0.05, "supports": "rollers", "electrical": "electrodes"},
        "discretization": {"degree": 2},
    })
    record = tiny_workflow.run_scenario(scn, str(tmp_path)).records[0]
    assert record.K_EM < 1e-6
    assert record.max_displacement > 0.0


def test_cli_list(capsys):
    assert cli.main(["list"]) == cli.EXIT_OK
    assert "two_patch_jump" in capsys.readouterr().out


def test_cli_config_errors(tmp_path, capsys):
    broken = tmp_path / "broken.json"
    broken.write_text("{ not json", encoding="utf-8")
    assert cli.main(["run", str(broken)]) == cli.EXIT_CONFIG
    assert cli.main(["run", "--scenario", "no_such_scenario"]) == cli.EXIT_CONFIG
    assert cli.main(["run", "--scenario", "two_patch_jump", "--set", "dg.beta=-1"]) == cli.EXIT_CONFIG
    assert cli.main(["run"]) == cli.EXIT_CONFIG
    assert "no_such_scenario" in capsys.readouterr().err


def test_cli_run(tmp_path, capsys):
    config = tmp_path / "tiny.json"
    config.write_text(json.dumps(TINY), encoding="utf-8")
    out = tmp_path / "out"
    code = cli.main(["run", str(config), "--out", str(out), "--set", "sweep.values=[1e10]"])
    assert code == cli.EXIT_OK
    printed = capsys.readouterr().out.split()
    assert str(out / "tiny.csv") in printed
    assert len(read_csv(str(out / "tiny.csv"))) == 1


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(os.path.dirname(__file__), "scenarios", "*.json"))))
def test_shipped_scenario_files_validate(path):
    scenarios = load_scenarios(path)
    assert scenarios
    assert all(s.name for s in scenarios)
