"""Tests for the experiment harness."""

import csv
import dataclasses
import json
import math

import pytest

from lorenz_shadow.harness import (
    RECORD_COLUMNS,
    RunRecord,
    execute,
    flow_tasks,
    map_tasks,
    run_map_task,
    run_probe,
    write_records,
)
from lorenz_shadow.spec_loader import experiment_config_from_dict, fingerprint


@pytest.fixture
def small_experiment(reference_document, tmp_path):
    reference_document.update(
        epsilons=[0.64], seeds=[1, 2], n_steps=12, output_dir=str(tmp_path / 'runs'),
        probe={'n_steps': 5, 'search_budget': 2, 'delta': 0.01, 'seed': 3},
    )
    reference_document['flow'].update(epsilons=[0.6], n_steps=6, modes=['noise'])
    return experiment_config_from_dict(reference_document)


def record(**overrides):
    values = dict(
        kind='1d', epsilon=0.64, seed=1, mode='noise', n_steps=10, passed=True,
        max_error=1e-6, config_fingerprint='f' * 64, constants={'epsilon': 0.64},
    )
    values.update(overrides)
    return RunRecord(**values)


class TestRunRecord:
    """Test RunRecord rows and serialization."""

    def test_row_matches_columns(self):
        row = record().row()
        assert len(row) == len(RECORD_COLUMNS)
        assert row[RECORD_COLUMNS.index('constants_fingerprint')] == fingerprint({'epsilon': 0.64})

    def test_to_dict(self):
        data = record(wall_time=1.5).to_dict()
        assert data['wall_time'] == 1.5
        assert data['constants_fingerprint'] == fingerprint({'epsilon': 0.64})

    def test_write_records(self, tmp_path):
        records = [record(), record(seed=2, passed=False, gamma_exact=True)]
        path = write_records(tmp_path, records)
        with open(path, newline='', encoding='utf-8') as f:
            rows = list(csv.reader(f))
        assert rows[0] == RECORD_COLUMNS
        assert rows[2][RECORD_COLUMNS.index('passed')] == 'false'
        assert rows[2][RECORD_COLUMNS.index('gamma_exact')] == 'true'
        details = json.loads((tmp_path / 'records.json').read_text(encoding='utf-8'))
        assert [d['seed'] for d in details] == [1, 2]


class TestMapTasks:
    """Test task expansion and the map worker."""

    def test_expansion(self, small_experiment, tmp_path):
        tasks = map_tasks(small_experiment, tmp_path)
        assert [t.seed for t in tasks] == [1, 2]
        assert all(t.out_dir == tmp_path / 'map' / 'eps-0.64' for t in tasks)
        assert all(t.config_fingerprint == small_experiment.fingerprint for t in tasks)

    def test_overrides(self, small_experiment, tmp_path):
        tasks = map_tasks(small_experiment, tmp_path, epsilons=[0.32], modes=['gamma-terminal'],
                          seeds=[9], n_steps=4)
        assert len(tasks) == 1
        assert (tasks[0].mode, tasks[0].seed, tasks[0].n_steps) == ('gamma-terminal', 9, 4)
        assert tasks[0].constants.epsilon == 0.32

    def test_worker_records(self, small_experiment, tmp_path):
        task = map_tasks(small_experiment, tmp_path)[0]
        records = run_map_task(task)
        assert [r.kind for r in records] == ['1d', '2d']
        assert all(r.passed for r in records)
        assert records[1].x_error <= 0.64 / 8.0
        for r in records:
            assert (task.out_dir / r.files[0]).exists()

    def test_failure_becomes_record(self, small_experiment, tmp_path):
        """A library error is reported in the record, not raised."""
        task = dataclasses.replace(map_tasks(small_experiment, tmp_path)[0], mode='bogus')
        records = run_map_task(task)
        assert [r.passed for r in records] == [False, False]
        assert records[0].error.startswith('ParameterError')
        assert records[0].max_error == math.inf

    @pytest.mark.slow
    def test_pool_keeps_task_order(self, small_experiment, tmp_path):
        serial = execute(map_tasks(small_experiment, tmp_path / 'a'), run_map_task, jobs=1)
        pooled = execute(map_tasks(small_experiment, tmp_path / 'b'), run_map_task, jobs=2)
        assert [r.row() for r in serial] == [r.row() for r in pooled]


class TestProbeAndFlow:
    """Test run_probe and flow task expansion."""

    def test_probe_files(self, small_experiment, tmp_path):
        payload = run_probe(small_experiment.map_spec, small_experiment, tmp_path, grid_step=1e-3)
        assert payload['seed'] == 3
        assert payload['n_steps'] == 5
        assert payload['config_fingerprint'] == small_experiment.fingerprint
        assert (tmp_path / payload['orbit_file']).exists()
        saved = json.loads((tmp_path / 'probe_seed-3.json').read_text(encoding='utf-8'))
        assert saved['bound'] == payload['bound']

    @pytest.mark.slow
    @pytest.mark.flow
    def test_flow_tasks_record_constants(self, small_experiment, tmp_path):
        tasks = flow_tasks(small_experiment, tmp_path)
        assert [(t.mode, t.seed, t.n_steps) for t in tasks] == [('noise', 1, 6), ('noise', 2, 6)]
        saved = json.loads((tmp_path / 'flow' / 'eps-0.6' / 'constants.json').read_text(encoding='utf-8'))
        assert saved['fingerprint'] == fingerprint(tasks[0].constants.to_dict())
