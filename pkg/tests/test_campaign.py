import csv
import json

import pytest

from coopsim import campaign
from coopsim.campaign import CampaignSpec, run_campaign
from coopsim.cli import main
from coopsim.protocol.exchange import clear_sensing_cache


def fresh():
    """Forget every memoized result so the next run recomputes from scratch."""
    campaign._ORACLE_CACHE.clear()
    clear_sensing_cache()


SMALL = dict(families=["LeftTurn"], configs=[4], seeds=1,
             strategies=["Selective", "Random", "NoComm"], n_s=[6, 10])


def csv_body(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# generated ")
    return lines[1:]


def test_spec_validation():
    with pytest.raises(ValueError):
        CampaignSpec(n_s=(2,), n_c=3)
    with pytest.raises(ValueError):
        CampaignSpec(seeds=0)
    with pytest.raises(ValueError):
        CampaignSpec(families=("Highway",))
    with pytest.raises(ValueError):
        CampaignSpec.from_dict({"seedz": 3})
    with pytest.raises(ValueError):
        CampaignSpec(configs=(27,))


def test_full_matrix_counts():
    spec = CampaignSpec()
    assert spec.variants() == [("Oracle", 0, 0), ("Selective", 6, 3), ("Selective", 10, 3),
                               ("Random", 6, 3)]
    assert spec.episode_count() == 972
    assert 81 * 3 * (len(spec.variants()) - 1) == 729


def test_seed_env_override(monkeypatch):
    monkeypatch.setenv("COOPSIM_SEED", "7")
    assert CampaignSpec().seed_list() == [7]
    monkeypatch.delenv("COOPSIM_SEED")
    assert CampaignSpec(seeds=2).seed_list() == [0, 1]


def test_spec_json_round_trip(tmp_path):
    spec = CampaignSpec.from_dict(SMALL)
    path = tmp_path / "spec.json"
    path.write_text(spec.to_json())
    assert CampaignSpec.load(path) == spec


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    fresh()
    spec = CampaignSpec.from_dict({**SMALL, "out": str(out)})
    return spec, run_campaign(spec), out


def test_one_row_per_strategy(small_run):
    spec, res, out = small_run
    keys = [g.key for g in res.groups if g.family == "LeftTurn"]
    assert sorted(keys) == [("LeftTurn", "NoComm", 0, 0), ("LeftTurn", "Oracle", 0, 0),
                            ("LeftTurn", "Random", 6, 3), ("LeftTurn", "Selective", 6, 3),
                            ("LeftTurn", "Selective", 10, 3)]
    assert res.group("LeftTurn", "Oracle", 0, 0).sr == 1.0
    rows = list(csv.reader(csv_body(out / "campaign.csv")))
    assert rows[0] == list(campaign.CSV_COLUMNS)
    assert len(rows) == 1 + 2 * len(keys)  # family rows plus the average rows
    eps = list(csv.DictReader((out / "episodes.csv").open()))
    assert len(eps) == 5
    assert json.loads((out / "spec.json").read_text())["families"] == ["LeftTurn"]


def test_rerun_is_byte_identical(small_run, tmp_path):
    spec, _, out = small_run
    fresh()
    run_campaign(spec, out_dir=tmp_path)
    assert csv_body(tmp_path / "campaign.csv") == csv_body(out / "campaign.csv")
    assert (tmp_path / "episodes.csv").read_bytes() == (out / "episodes.csv").read_bytes()


def test_parallel_matches_serial(small_run, tmp_path):
    spec, _, out = small_run
    fresh()
    run_campaign(CampaignSpec.from_dict({**SMALL, "jobs": 2}), out_dir=tmp_path)
    assert csv_body(tmp_path / "campaign.csv") == csv_body(out / "campaign.csv")


def test_udp_transport_matches_inproc(small_run, tmp_path):
    spec, res, out = small_run
    fresh()
    run_campaign(CampaignSpec.from_dict({**SMALL, "transport": "udp"}), out_dir=tmp_path)
    assert (tmp_path / "episodes.csv").read_bytes() == (out / "episodes.csv").read_bytes()


def test_oracle_only_spec(tmp_path):
    spec = CampaignSpec.from_dict({"families": ["RedLightViolation"], "configs": [0, 26],
                                   "seeds": 1, "strategies": ["Oracle"]})
    res = run_campaign(spec, out_dir=tmp_path)
    assert [g.sr for g in res.groups] == [1.0, 1.0]


def test_cli_writes_reports(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"families": ["Overtaking"], "configs": [0], "seeds": 1,
                                "strategies": ["Selective"], "n_s": [6]}))
    code = main(["--spec", str(spec), "--out", str(tmp_path / "out"),
                 "--replay-dir", str(tmp_path / "replay"), "--plot-csv"])
    assert code == 0
    assert "Selective" in capsys.readouterr().out
    assert (tmp_path / "out" / "campaign.csv").exists()
    replays = sorted(p.name for p in (tmp_path / "replay").iterdir())
    assert replays == ["Overtaking_00_s0_Oracle_ns0.csv", "Overtaking_00_s0_Selective_ns6.csv"]
    header = (tmp_path / "replay" / replays[0]).read_text().splitlines()[0]
    assert header == "tick,vehicle_id,x,y,heading,speed,role"
    traces = list((tmp_path / "out" / "traces").iterdir())
    assert len(traces) == 1
    assert traces[0].read_text().startswith("tick,candidate,utility,selected,degenerate")


def test_cli_bad_spec(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n_c": 9}))
    assert main(["--spec", str(bad)]) == 2
    assert "bad spec" in capsys.readouterr().err
    assert main(["--spec", str(tmp_path / "missing.json")]) == 2
