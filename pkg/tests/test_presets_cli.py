import json
import math

import numpy as np
import pytest

from modspec.cli import EXIT_ASSERTION, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main
from modspec.config import DEFAULTS, dump_config, parse_config, with_value
from modspec.errors import ValidationError
from modspec.experiments import compare_methods, cooperativity_sweep, run_homodyne_map, sweep
from modspec.io import config_from_manifest, read_csv
from modspec.model import thermal_occupation
from modspec.presets import OMEGA_M_HZ, GAMMA_M, fig2a, fig2c, fig3, gbar_for_cooperativity
from modspec.spectra import homodyne_map

EXPLICIT = """
methods = ["shifted", "floquet", "oracle"]

[grid]
start = 0.8
stop = 1.2
points = 101

[modes.a]
kind = "optical"
frequency = -1.0
damping = 1.0

[modes.b]
kind = "mechanical"
frequency = 1.0
damping = 0.01
occupation = 5.0

[modulations.coupling]
target = "g"
modes = ["a", "b"]
shape = "static"
amplitude = 0.05
"""


def run(tmp_path, *argv):
    return main([*argv, "--output-dir", str(tmp_path), "--prefix", "run"])


# -- presets --------------------------------------------------------------------------

def test_fig2a_parameters():
    p = fig2a(0.9)
    assert (p.gbar, p.kappa, p.detuning, p.omega_d, p.gamma_m) == (0.01, 1.0, -1.0, 0.05, 2.3e-5)
    assert math.isclose(p.omega_2, 0.045)
    assert math.isclose(p.nbar_b, thermal_occupation(300.0, OMEGA_M_HZ), rel_tol=1e-12)
    assert 3.3e7 < p.nbar_b < 3.5e7
    assert math.isclose(p.cooperativity, 8 * 0.01 ** 2 / 2.3e-5)


def test_fig2c_hits_the_requested_cooperativity():
    for resolved in (True, False):
        p = fig2c(1.4, 250.0, resolved)
        assert math.isclose(p.cooperativity, 250.0)
        assert p.kappa == (1.0 if resolved else 1 / 0.15)
    assert math.isclose(gbar_for_cooperativity(100.0, 1.0, GAMMA_M) ** 2 * 8 / GAMMA_M, 100.0)


def test_fig3_layout():
    s, n = fig3().build()
    assert [m.name for m in s.modes] == ["cool", "probe", "b"]
    assert s.is_modulated and s.max_harmonic == 2
    std, _ = fig3(None).build()
    assert not std.is_modulated


# -- configuration --------------------------------------------------------------------

def test_defaults_are_filled_and_recorded():
    cfg = parse_config('preset = "fig2a"')
    assert cfg.K == 8 and not cfg.auto_K
    g = cfg.grid()
    assert g.size == 2048 and g[0] == 0.5 and g[-1] == 1.5
    assert "truncation.K" in cfg.defaults and "preset_params.ratio" in cfg.defaults
    assert cfg.data["preset_params"]["ratio"] == 0.9
    assert cfg.preset_provenance()["gbar"] == 0.01


def test_preset_expansion_matches_the_factory():
    cfg = parse_config('preset = "fig2a"\n[preset_params]\nratio = 0.5\n')
    s, n = cfg.build()
    ref, rn = fig2a(0.5).build()
    for k in set(s.harmonics) | set(ref.harmonics):
        assert np.array_equal(s.harmonics[k], ref.harmonics[k])
    assert np.array_equal(n.correlation, rn.correlation)


def test_negative_occupation_names_the_field():
    with pytest.raises(ValidationError) as err:
        parse_config('preset = "fig2a"\n[preset_params]\nnbar_b = -1.0\n')
    assert err.value.path == "preset_params.nbar_b"
    with pytest.raises(ValidationError) as err:
        parse_config(EXPLICIT.replace("occupation = 5.0", "occupation = -5.0"))
    assert err.value.path == "modes.b.occupation"


@pytest.mark.parametrize("text, path", [
    ('preset = "fig2a"\ncolour = 1', "colour"),
    ('preset = "fig2a"\n[grid]\nstep = 0.1', "grid.step"),
    ('preset = "fig2a"\n[preset_params]\nomega_2 = 0.1', "preset_params.omega_2"),
    ('preset = "fig9"', "preset"),
    ('preset = "fig2a"\nmethods = ["magic"]', "methods"),
    ('preset = "fig2a"\n[grid]\nstart = 2.0', "grid.stop"),
])
def test_invalid_keys_are_rejected(text, path):
    with pytest.raises(ValidationError) as err:
        parse_config(text)
    assert err.value.path == path


def test_modulation_needs_a_drive():
    bad = EXPLICIT.replace('shape = "static"', 'shape = "sine"')
    with pytest.raises(ValidationError, match="drive"):
        parse_config(bad)
    cfg = parse_config(bad + "\n[drive]\nfrequency = 0.05\n")
    assert cfg.build()[0].is_modulated


def test_unknown_mode_reference():
    with pytest.raises(ValidationError) as err:
        parse_config(EXPLICIT.replace('modes = ["a", "b"]', 'modes = ["a", "c"]'))
    assert err.value.path == "modulations.coupling.modes"


def test_hz_units():
    text = EXPLICIT.replace("[grid]", '[units]\nfrequency_unit = "hz"\n\n[grid]')
    text = text.replace("start = 0.8", f"start = {0.8 * OMEGA_M_HZ}").replace("stop = 1.2", f"stop = {1.2 * OMEGA_M_HZ}")
    for key in ("frequency = -1.0", "frequency = 1.0", "damping = 1.0", "damping = 0.01", "amplitude = 0.05"):
        name, val = key.split(" = ")
        text = text.replace(key, f"{name} = {float(val) * OMEGA_M_HZ!r}", 1)
    cfg = parse_config(text)
    ref = parse_config(EXPLICIT)
    assert np.allclose(cfg.grid(), ref.grid(), rtol=1e-14)
    s, _ = cfg.build()
    r, _ = ref.build()
    assert np.allclose(s.harmonics[0], r.harmonics[0], rtol=1e-14)


def test_config_round_trip():
    cfg = parse_config('preset = "fig3"\n[detection]\nkind = "output-homodyne"\nmode = "probe"\n')
    again = parse_config(dump_config(cfg))
    assert again.data == cfg.data


def test_with_value_revalidates():
    cfg = parse_config('preset = "fig2a"')
    assert with_value(cfg, "preset_params.ratio", 1.4).data["preset_params"]["ratio"] == 1.4
    with pytest.raises(ValidationError):
        with_value(cfg, "grid.points", 0)
    with pytest.raises(ValidationError):
        with_value(cfg, "grid.nonsense", 1)


def test_default_table_is_not_mutated():
    parse_config('preset = "fig2a"\n[grid]\npoints = 11\n')
    assert DEFAULTS["grid"]["points"] == 2048


# -- experiments ----------------------------------------------------------------------

def test_unmodulated_methods_agree():
    cmp = compare_methods(parse_config(EXPLICIT))
    assert not cmp.equivalence_failures()
    for a, b, mx, _ in cmp.deviations:
        assert mx < 1e-9, (a, b, mx)


def test_sweep_over_a_preset_parameter():
    cfg = parse_config('preset = "fig2a"\n[grid]\npoints = 64\n[sweep]\nparameter = "preset_params.ratio"\n'
                       'values = [0.05, 0.9]\n')
    points = sweep(cfg)
    assert [v for v, _, _ in points] == [0.05, 0.9]
    assert points[1][2] < points[0][2]


def test_ratio_flat_in_cooperativity_when_resolved():
    Cs = [10.0, 30.0, 100.0, 400.0]
    table = cooperativity_sweep([0.05, 0.5, 0.9, 1.4], Cs)
    for row in table[:3]:
        assert np.all(np.abs(row / row[0] - 1) < 0.05)
    assert np.all(table[3] < 5e-3)


def test_bad_cavity_limit_is_flat():
    w = np.linspace(0.5, 1.5, 201)
    phases = np.linspace(0, np.pi, 9)
    devs = []
    for kappa in (1e2, 1e3, 1e4):
        s, n = fig3(kappa=kappa, kappa_p=kappa, gbar=1e-3).build()
        devs.append(np.max(np.abs(homodyne_map(s, n, "probe", phases, w, 8) - 1)))
    assert devs[1] < devs[0] / 5 and devs[2] < devs[1] / 5
    assert devs[-1] < 1e-3


def test_homodyne_map_from_config():
    cfg = parse_config('preset = "fig3"\n[detection]\nkind = "output-homodyne"\nmode = "probe"\n'
                       '[grid]\nstart = 0.9\nstop = 1.1\npoints = 81\n[homodyne]\nphases = 9\n')
    hm = run_homodyne_map(cfg)
    assert hm.values.shape == (9, 81)
    assert np.allclose(hm.values[0], 1.0, atol=1e-3)
    assert hm.minimum < 1 and hm.squeezing_db > 0


# -- command line ---------------------------------------------------------------------

def test_cli_spectrum_is_deterministic(tmp_path):
    args = ["spectrum", "--preset", "fig2a", "--ratio", "0.5", "--points", "128"]
    names = ("run.csv", "run.manifest.json", "run.config.toml")
    assert run(tmp_path, *args) == EXIT_OK
    first = [(tmp_path / name).read_bytes() for name in names]
    assert run(tmp_path, *args) == EXIT_OK
    assert first == [(tmp_path / name).read_bytes() for name in names]
    header, data = read_csv(tmp_path / "run.csv")
    assert header == ["omega", "value"] and data.shape == (128, 2)


def test_cli_manifest_reproduces_the_run(tmp_path):
    assert run(tmp_path, "spectrum", "--preset", "fig2a", "--points", "64", "--K", "10") == EXIT_OK
    manifest = json.loads((tmp_path / "run.manifest.json").read_text())
    assert manifest["K"] == 10 and manifest["seed"] == 0
    assert "grid.start" in manifest["defaults"] and "grid.points" not in manifest["defaults"]
    assert {f["name"] for f in manifest["files"]} == {"run.csv", "run.config.toml"}
    assert set(manifest["versions"]) >= {"modspec", "numpy", "scipy"}
    cfg = config_from_manifest(tmp_path / "run.manifest.json")
    rerun = tmp_path / "again"
    assert cfg.data == parse_config((tmp_path / "run.config.toml").read_text()).data
    with_out = ["spectrum", str(tmp_path / "run.config.toml"), "--output-dir", str(rerun)]
    assert main(with_out) == EXIT_OK
    assert (rerun / "run.csv").read_bytes() == (tmp_path / "run.csv").read_bytes()


def test_cli_flags_override_the_file(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text('preset = "fig2a"\n[grid]\npoints = 64\n')
    assert main(["spectrum", str(path), "--points", "32", "--set", "truncation.K=12",
                 "--output-dir", str(tmp_path), "--prefix", "o"]) == EXIT_OK
    manifest = json.loads((tmp_path / "o.manifest.json").read_text())
    assert manifest["config"]["grid"]["points"] == 32 and manifest["K"] == 12


def test_cli_exit_codes(tmp_path, capsys):
    assert run(tmp_path, "spectrum", "--preset", "fig2a", "--set", "preset_params.nbar_b=-1") == EXIT_VALIDATION
    assert "preset_params.nbar_b" in capsys.readouterr().err
    assert run(tmp_path, "spectrum", "--preset", "nope") == EXIT_VALIDATION
    assert run(tmp_path, "compare", "--preset", "fig2a", "--ratio", "0.5", "--methods", "shifted,floquet",
               "--points", "64", "--start", "0.9", "--stop", "1.1") == EXIT_ASSERTION
    singular = tmp_path / "singular.toml"
    singular.write_text(EXPLICIT.replace("damping = 0.01", "damping = 1e-14").replace("amplitude = 0.05",
                                                                                      "amplitude = 0.0"))
    assert main(["spectrum", str(singular), "--output-dir", str(tmp_path), "--prefix", "u"]) == EXIT_NUMERICAL
    assert "error" in json.loads((tmp_path / "u.manifest.json").read_text())["results"]


def test_cli_compare_passes_without_modulation(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(EXPLICIT)
    assert main(["compare", str(path), "--output-dir", str(tmp_path), "--prefix", "c"]) == EXIT_OK
    rows = json.loads((tmp_path / "c.manifest.json").read_text())["results"]["deviations"]
    assert len(rows) == 3 and all(r["max_rel"] < 1e-9 for r in rows)


def test_cli_sweep_writes_an_index(tmp_path):
    assert run(tmp_path, "sweep", "--preset", "fig2a", "--points", "32", "--sweep-parameter",
               "preset_params.ratio", "--sweep-values", "0.2,0.9") == EXIT_OK
    points = json.loads((tmp_path / "run.manifest.json").read_text())["results"]["points"]
    assert [p["value"] for p in points] == [0.2, 0.9]
    for p in points:
        assert (tmp_path / p["file"]).exists()


def test_cli_homodyne_map_header(tmp_path):
    assert run(tmp_path, "homodyne-map", "--preset", "fig3", "--detection-kind", "output-homodyne",
               "--mode", "probe", "--phases", "5", "--points", "16") == EXIT_OK
    header, data = read_csv(tmp_path / "run.map.csv")
    assert header[0] == "omega" and np.allclose([float(h) for h in header[1:]], np.linspace(0, np.pi, 5))
    assert data.shape == (16, 6)


def test_cli_heterodyne_rejects_off_resonant_cross(tmp_path):
    base = ["heterodyne", "--preset", "fig2a", "--points", "16", "--cross", "--detection-kind",
            "output-heterodyne"]
    assert run(tmp_path, *base, "--beat", "0.025") == EXIT_OK
    assert run(tmp_path, *base, "--beat", "0.0185") == EXIT_VALIDATION


def test_cli_converge(tmp_path):
    assert run(tmp_path, "converge", "--preset", "fig2a", "--ratio", "0.5", "--points", "32") == EXIT_OK
    _, data = read_csv(tmp_path / "run.csv")
    assert data[-1, 1] < data[0, 1]
