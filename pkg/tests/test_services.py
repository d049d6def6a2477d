import csv

import pytest

from src.config import RunConfig
from src.economics import rate_cache
from src.errors import ConfigError
from src.reports import aggregate, per_su_fairness, write_csv
from src.schemas import OptimizeRow, SecondaryUser
from src.services import (
    apply_sweep,
    build_tasks,
    identical_costs,
    instance_users,
    nonjoint_task,
    optimize_task,
    oracle_task,
    run_tasks,
    simulation_setup,
)


def base_config(**updates) -> RunConfig:
    return RunConfig.model_validate(
        {"population": {"count": 3}, "grid": {"levels": 4}, "seed": 5, **updates}
    )


def double_trial(task):
    return task.trial * 2


class TestSweeps:
    def test_no_sweep_is_identity(self):
        config = base_config()
        assert apply_sweep(config, None, None) is config

    @pytest.mark.parametrize("key,value", [("zeta", 0.9), ("p_h0", 0.6), ("gamma_db", -3.0)])
    def test_system_keys(self, key, value):
        assert getattr(apply_sweep(base_config(), key, value).system, key) == value

    def test_m_truncates_listed_users(self):
        users = [{"id": i, "gain_to_fc": 1.0} for i in range(4)]
        swept = apply_sweep(base_config(users=users), "m", 2.0)
        assert [su.id for su in swept.users] == [0, 1]
        assert swept.m_total == 2

    def test_m_beyond_listed_users(self):
        users = [{"id": i, "gain_to_fc": 1.0} for i in range(2)]
        with pytest.raises(ConfigError):
            apply_sweep(base_config(users=users), "m", 3.0)

    def test_buffer_bits(self):
        swept = apply_sweep(base_config(), "buffer_bits", 200.0)
        assert swept.population.buffer_bits == 200

    def test_invalid_value(self):
        with pytest.raises(ConfigError):
            apply_sweep(base_config(), "zeta", 1.5)
        with pytest.raises(ConfigError):
            apply_sweep(base_config(), "m", 2.5)


class TestTasks:
    def test_layout(self, tmp_path):
        config = base_config(experiment={"sweep": "zeta", "values": [0.6, 0.8]}, trials=3)
        tasks = build_tasks(config, tmp_path)
        assert [(t.sweep_value, t.trial) for t in tasks] == [(v, i) for v in (0.6, 0.8) for i in range(3)]
        assert tasks[0].trace_path.endswith("point000_trial0.ndjson")
        assert tasks[3].trace_path.endswith("point001_trial0.ndjson")
        assert tasks[1].trace_path is None
        assert tasks[4].config.system.zeta == 0.8

    def test_pool_keeps_order(self):
        tasks = build_tasks(base_config(trials=6))
        assert run_tasks(double_trial, tasks, 1) == [0, 2, 4, 6, 8, 10]
        assert run_tasks(double_trial, tasks, 2) == [0, 2, 4, 6, 8, 10]

    def test_instances_depend_on_trial_only(self):
        config = base_config()
        assert instance_users(config, 0) == instance_users(config, 0)
        assert instance_users(config, 0) != instance_users(config, 1)
        assert len(instance_users(config, 4)) == 3

    def test_listed_users_used_verbatim(self):
        config = base_config(users=[{"id": 9, "gain_to_fc": 0.5}])
        assert instance_users(config, 3) == [SecondaryUser(id=9, gain_to_fc=0.5)]
        assert simulation_setup(config).population.count == 1

    def test_identical_costs(self):
        same = [SecondaryUser(id=i, gain_to_fc=1.0) for i in range(3)]
        assert identical_costs(same)
        assert not identical_costs(same + [SecondaryUser(id=5, gain_to_fc=1.0, pay_rate=0.2)])

    def test_optimize_row(self):
        row = optimize_task(build_tasks(base_config())[0])
        assert row.trial == 0 and row.sweep_value is None
        if row.feasible:
            assert row.chosen_pfa in (0.25, 0.5, 0.75)
            assert 1 <= row.n_selected <= 3
            assert row.fc_utility > 0

    @pytest.mark.parametrize("task_fn", [optimize_task, oracle_task, nonjoint_task])
    def test_rate_cache_holds_one_instance(self, task_fn):
        tasks = build_tasks(base_config(trials=20))
        sizes = []
        for task in tasks:
            task_fn(task)
            assert len(rate_cache.link_rates) <= 3
            sizes.append(len(rate_cache.effective))
        rate_cache.clear()
        task_fn(tasks[-1])
        assert len(rate_cache.effective) == sizes[-1]


class TestReports:
    def test_schema_row_then_header(self, tmp_path):
        path = write_csv(
            tmp_path / "out" / "x.csv",
            "optimize",
            ["a", "b", "c"],
            [{"a": 0.1, "b": None, "c": [1.5, None]}],
        )
        rows = list(csv.reader(path.open(encoding="utf-8")))
        assert rows[0] == ["#schema", "cogalloc.optimize/1"]
        assert rows[1] == ["a", "b", "c"]
        assert rows[2] == ["0.1", "", "1.5;"]

    def test_aggregate(self):
        rows = [
            OptimizeRow(sweep_value=v, trial=t, fc_utility=u, chosen_pfa=None, chosen_k=None, n_selected=0, feasible=True)
            for v, t, u in [(0.5, 0, 1.0), (0.5, 1, 3.0), (0.9, 0, 2.0)]
        ]
        columns, summary = aggregate(rows, {"u": lambda r: r.fc_utility, "missing": lambda r: None})
        assert columns == ["sweep_value", "trials", "mean_u", "stderr_u", "mean_missing", "stderr_missing"]
        assert summary[0]["sweep_value"] == 0.5
        assert summary[0]["mean_u"] == pytest.approx(2.0)
        assert summary[0]["stderr_u"] == pytest.approx(1.0)
        assert summary[1]["trials"] == 1
        assert summary[1]["mean_missing"] is None

    def test_per_su_fairness(self):
        assert per_su_fairness([[1.0, 1.0], [1.0, 1.0]]) == pytest.approx(1.0)
        assert per_su_fairness([[1.0, None], [3.0, None]]) == pytest.approx(1.0)
        assert per_su_fairness([]) is None
        assert per_su_fairness([[None, None]]) is None
