import pytest

from app.database import DatabaseError, list_experiments, load_records, store_records, table_name_for
from app.models import TrialRecord


def records(n=3):
    return [
        TrialRecord(env_id="dchain", algorithm="CB", seed=seed, iteration=100,
                    simple_regret=0.25 if seed else None, joint_score=0.5 + seed / 10, pr1=0, pr2=0, wallclock_ms=7)
        for seed in range(n)
    ]


def test_store_and_load(tmp_path):
    db = str(tmp_path / "out" / "records.db")
    store_records(db, "smoke", records())
    assert load_records(db, "smoke") == records()
    assert list_experiments(db) == ["smoke"]


def test_store_replaces_previous_run(tmp_path):
    db = str(tmp_path / "records.db")
    store_records(db, "smoke", records(3))
    store_records(db, "smoke", records(1))
    assert load_records(db, "smoke") == records(1)


def test_experiment_names_are_sanitized(tmp_path):
    db = str(tmp_path / "records.db")
    assert table_name_for("d-chain 10") == "records_d_chain_10"
    store_records(db, "d-chain 10", records(2))
    assert load_records(db, "d-chain 10") == records(2)


def test_missing_records(tmp_path):
    with pytest.raises(DatabaseError):
        load_records(str(tmp_path / "absent.db"), "smoke")
    db = str(tmp_path / "records.db")
    store_records(db, "smoke", records(1))
    with pytest.raises(DatabaseError):
        load_records(db, "other")
    with pytest.raises(DatabaseError):
        store_records(db, "", records(1))
