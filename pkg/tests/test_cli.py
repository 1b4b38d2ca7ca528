import csv
import hashlib
import json
import textwrap

import pytest

from htnet.cli import main
from htnet.config import parse_config
from htnet.errors import ConfigError


def write(tmp_path, body, name="scenario.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(body))
    return p


BASE = """
graph = {{family = "{family}", n = {n}}}
model = "{model}"
tasks = {tasks}
{extra}
[design]
{design}
[estimand]
preset = "{preset}"
[table]
source = "random"
"""


def scenario(tmp_path, family="path", n=2, model="binary", tasks='["propensity"]', design='kind = "bernoulli"\np = 0.5',
             preset="TTE", extra=""):
    return write(tmp_path, BASE.format(family=family, n=n, model=model, tasks=tasks, design=design, preset=preset, extra=extra))


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(scenario(tmp_path))
    assert cfg.mode == "exact" and cfg.workers == 1 and cfg.seed == 0
    assert cfg.out == tmp_path / "out"
    assert cfg.table.source == "random" and cfg.table.seed == 0
    assert not cfg.plots


def test_unknown_design_kind(tmp_path):
    with pytest.raises(ConfigError) as err:
        parse_config(scenario(tmp_path, design='kind = "bogus"'))
    assert err.value.field == "design.kind"
    assert "bernoulli" in str(err.value) and "is_tte" in str(err.value)


def test_unknown_model(tmp_path):
    with pytest.raises(ConfigError, match="model.*valid options"):
        parse_config(scenario(tmp_path, model="threshold"))


def test_n1_exceeds_independent_set(tmp_path):
    with pytest.raises(ConfigError) as err:
        parse_config(scenario(tmp_path, n=3, design='kind = "is_ate"\nn_1 = 3'))
    assert err.value.field == "design.n_1"


def test_missing_field(tmp_path):
    with pytest.raises(ConfigError) as err:
        parse_config(scenario(tmp_path, design='kind = "crd"'))
    assert err.value.field == "design.n_t"


def test_malformed_file(tmp_path):
    with pytest.raises(ConfigError, match="malformed"):
        parse_config(write(tmp_path, "graph = [unclosed"))


def test_missing_referenced_file(tmp_path):
    p = write(tmp_path, """
        graph = "nowhere.json"
        model = "binary"
        tasks = ["classify"]
        [design]
        kind = "crd"
        n_t = 1
        [estimand]
        preset = "TTE"
        [table]
        source = "random"
    """)
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(p)


def test_table_source_exclusive(tmp_path):
    p = write(tmp_path, BASE.format(family="path", n=2, model="binary", tasks='["moments"]', design='kind = "crd"\nn_t = 1',
                                    preset="TTE", extra="") + 'file = "t.csv"\n')
    with pytest.raises(ConfigError) as err:
        parse_config(p)
    assert err.value.field == "table.file"


def test_empty_tasks(tmp_path):
    with pytest.raises(ConfigError, match="tasks"):
        parse_config(scenario(tmp_path, tasks="[]"))


def test_files_and_custom_estimand(tmp_path):
    (tmp_path / "g.json").write_text(json.dumps({"n": 4, "neighborhoods": [[1], [0, 2], [1, 3], [2]]}))
    (tmp_path / "c.toml").write_text("K = 2\ncluster = [0, 0, 1, 1]\n")
    rows = "unit,z,e,value\n" + "".join(f"{i},{z},{e},{i + z + e}\n" for i in range(4) for z in (0, 1) for e in (0, 1))
    (tmp_path / "t.csv").write_text(rows)
    p = write(tmp_path, """
        graph = "g.json"
        model = "binary"
        tasks = ["propensity", "moments"]
        [design]
        kind = "cluster"
        cluster_file = "c.toml"
        K_t = 1
        [estimand]
        tau1 = [1, 1]
        tau0 = [0, 0]
        [table]
        source = "file"
        file = "t.csv"
    """)
    assert main(["run", str(p)]) == 0
    with open(tmp_path / "out" / "moments.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["estimator"] for r in rows] == ["HT", "zero"]
    assert float(rows[0]["mse"]) >= 0.0


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_propensity_task_single_edge(tmp_path):
    assert main(["run", str(scenario(tmp_path))]) == 0
    rows = read_rows(tmp_path / "out" / "propensity.csv")
    hits = [r for r in rows if (r["z"], r["e"]) == ("1", "1")]
    assert hits and all(float(r["pi"]) == 0.25 for r in hits)
    assert all(r["stderr"] == "" for r in rows)


def test_classify_task_is_ate_path3(tmp_path):
    p = scenario(tmp_path, n=3, tasks='["classify"]', design='kind = "is_ate"\nn_1 = 1', preset="DIRECT")
    assert main(["run", str(p)]) == 0
    assert json.loads((tmp_path / "out" / "classify.json").read_text())["verdict"] == "Fixed"


def test_dominance_task_crd_path4(tmp_path):
    """Expected to report shrunk-H-T dominance; units 1 and 2 can never reach
    (0,0) with only two controls, so the run stops with a positivity error."""
    p = scenario(tmp_path, n=4, tasks='["dominance"]', design='kind = "crd"\nn_t = 2')
    assert main(["run", str(p)]) == 0
    verdict = json.loads((tmp_path / "out" / "dominance.json").read_text())
    assert verdict["verdict"] == "A-dominates" and verdict["witness"]


def test_dominance_task_bernoulli_path4(tmp_path):
    p = scenario(tmp_path, n=4, tasks='["dominance"]', design='kind = "bernoulli"\np = 0.5',
                 extra="[shrinkage]\nrestarts = 4\nsamples = 500")
    assert main(["run", str(p)]) == 0
    verdict = json.loads((tmp_path / "out" / "dominance.json").read_text())
    assert verdict["summary"] == "shrunk-HT dominates HT" and verdict["witness"].startswith(("sphere", "axis"))
    assert 0 < verdict["k"] < 1


def test_exit_code_config(tmp_path, capsys):
    assert main(["run", str(scenario(tmp_path, design='kind = "bogus"'))]) == 2
    assert "design.kind" in capsys.readouterr().err


def test_exit_code_budget(tmp_path, capsys):
    assert main(["run", str(scenario(tmp_path, n=23))]) == 3
    assert "enumeration too large" in capsys.readouterr().err


def test_exit_code_positivity(tmp_path, capsys):
    p = scenario(tmp_path, n=4, tasks='["shrinkage"]', design='kind = "crd"\nn_t = 2')
    assert main(["run", str(p)]) == 4
    assert "positivity" in capsys.readouterr().err


ALL_TASKS = '["propensity", "classify", "unbiased-family", "moments", "shrinkage", "dominance"]'


def _run_bundle(tmp_path, sub, *flags):
    p = scenario(tmp_path, n=5, family="cycle", tasks=ALL_TASKS, design='kind = "crd"\nn_t = 2',
                 extra="plots = true\n[shrinkage]\nrestarts = 3\nsamples = 200\n[dominance]\ntables = 30")
    out = tmp_path / sub
    assert main(["run", str(p), "--out", str(out), *flags]) == 0
    return out


def test_manifest_lists_every_output(tmp_path):
    out = _run_bundle(tmp_path, "a")
    manifest = json.loads((out / "manifest.json").read_text())
    produced = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert set(manifest["files"]) == produced
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert {"config_sha256", "seed", "version", "wall_time_s"} <= set(manifest)
    assert {"propensity.svg", "moments.svg", "dominance.svg"} <= produced


def test_rerun_is_byte_identical(tmp_path):
    a = _run_bundle(tmp_path, "a", "--workers", "2")
    b = _run_bundle(tmp_path, "b", "--workers", "2")
    ma = json.loads((a / "manifest.json").read_text())["files"]
    mb = json.loads((b / "manifest.json").read_text())["files"]
    assert ma == mb


def test_seed_override_changes_random_table(tmp_path):
    p = scenario(tmp_path, n=3, tasks='["moments"]')
    main(["run", str(p), "--out", str(tmp_path / "s0")])
    main(["run", str(p), "--out", str(tmp_path / "s1"), "--seed", "1"])
    assert (tmp_path / "s0" / "table.csv").read_bytes() != (tmp_path / "s1" / "table.csv").read_bytes()
    manifest = json.loads((tmp_path / "s1" / "manifest.json").read_text())
    assert manifest["seed"] == 1


def test_mc_mode_run(tmp_path):
    p = scenario(tmp_path, n=2, tasks='["propensity", "moments", "classify"]')
    assert main(["run", str(p), "--mode", "mc", "--mc-reps", "20000", "--seed", "3"]) == 0
    rows = read_rows(tmp_path / "out" / "propensity.csv")
    mc = [r for r in rows if r["method"] == "montecarlo"]
    assert mc and all(r["stderr"] for r in mc)
    moments = read_rows(tmp_path / "out" / "moments.csv")
    assert "se_mse" in moments[0]
    assert json.loads((tmp_path / "out" / "classify.json").read_text())["approximate"] is True


def test_console_help(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--help"])
    assert exc.value.code == 0
    assert "--mc-reps" in capsys.readouterr().out
