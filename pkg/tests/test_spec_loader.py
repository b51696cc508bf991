"""Tests for spec_loader module."""

import json

import numpy as np
import pytest

from lorenz_shadow.errors import SpecValidationError
from lorenz_shadow.map_core import LorenzMapSpec
from lorenz_shadow.seeding import derive_seed
from lorenz_shadow.spec_loader import (
    canonical_json,
    experiment_config_from_dict,
    fingerprint,
    flow_spec_from_dict,
    flow_spec_to_dict,
    load_experiment_config,
    load_json_document,
    map_spec_from_dict,
    map_spec_to_dict,
)


class TestMapDocuments:
    """Test map spec parsing and validation."""

    def test_reference_map(self, reference_document):
        spec = map_spec_from_dict(reference_document['map'])
        assert spec == LorenzMapSpec()
        assert map_spec_to_dict(spec) == reference_document['map']

    def test_wrong_type_names_path(self, reference_document):
        doc = reference_document['map']
        doc['alpha']['c'] = "big"
        with pytest.raises(SpecValidationError) as info:
            map_spec_from_dict(doc)
        assert "alpha/c" in str(info.value)

    def test_missing_block_is_root_error(self, reference_document):
        doc = reference_document['map']
        del doc['beta']
        with pytest.raises(SpecValidationError) as info:
            map_spec_from_dict(doc)
        assert "<root>" in str(info.value)

    def test_unknown_key_rejected(self, reference_document):
        doc = reference_document['map']
        doc['alpha']['gamma'] = 1.0
        with pytest.raises(SpecValidationError):
            map_spec_from_dict(doc)

    def test_out_of_range_exponent(self, reference_document):
        """rho passes the schema as a number but the map rejects it."""
        doc = reference_document['map']
        doc['alpha']['rho'] = 1.5
        with pytest.raises(SpecValidationError) as info:
            map_spec_from_dict(doc)
        assert "rho" in str(info.value)

    def test_negative_shift_range(self, reference_document):
        doc = reference_document['map']
        doc['mu0'] = -0.01
        with pytest.raises(SpecValidationError):
            map_spec_from_dict(doc)


class TestFlowDocuments:
    """Test flow spec parsing."""

    def test_embedded_map_wins(self, reference_document):
        doc = dict(reference_document['flow'])
        doc['map'] = json.loads(json.dumps(reference_document['map']))
        doc['map']['alpha']['c'] = 1.9
        fs = flow_spec_from_dict(doc, LorenzMapSpec())
        assert fs.map.alpha.c == 1.9

    def test_map_argument_used(self, reference_document):
        other = map_spec_from_dict(dict(reference_document['map'], mu0=0.01))
        fs = flow_spec_from_dict(reference_document['flow'], other)
        assert fs.map.mu0 == 0.01

    def test_reference_map_fallback(self, reference_document):
        fs = flow_spec_from_dict(reference_document['flow'])
        assert fs.map == LorenzMapSpec()
        assert flow_spec_to_dict(fs)['lambda2'] == 5.0

    def test_rate_ordering_rejected(self, reference_document):
        doc = dict(reference_document['flow'], lambda1=6.0)
        with pytest.raises(SpecValidationError) as info:
            flow_spec_from_dict(doc)
        assert "flow spec rejected" in str(info.value)

    def test_missing_rate(self, reference_document):
        doc = dict(reference_document['flow'])
        del doc['lambda3']
        with pytest.raises(SpecValidationError):
            flow_spec_from_dict(doc)


class TestExperimentConfig:
    """Test experiment documents and their defaults."""

    def test_defaults(self, reference_document):
        config = experiment_config_from_dict(reference_document)
        assert config.epsilons == [0.64, 0.32]
        assert config.n_steps == 1000
        assert config.modes == ['noise']
        assert config.beta_bound == 'strict'
        assert config.flow_spec is not None
        assert config.flow_sweep.epsilons == [0.6]
        assert config.flow_sweep.n_steps == 100
        assert config.flow_sweep.modes == ['noise', 'gamma']
        assert config.probe.epsilon_star == 0.05
        assert config.probe.search_budget == 16

    def test_derived_seeds(self, reference_document):
        reference_document.update(master_seed=7, n_runs=3)
        config = experiment_config_from_dict(reference_document)
        assert config.seeds == [derive_seed(7, 'run', k) for k in range(3)]

    def test_default_master_seed(self, reference_document):
        config = experiment_config_from_dict(reference_document, default_master=5)
        assert len(config.seeds) == 10
        assert config.seeds[0] == derive_seed(5, 'run', 0)

    def test_explicit_seeds(self, reference_document):
        reference_document.update(seeds=[3, 1, 2], master_seed=9)
        assert experiment_config_from_dict(reference_document).seeds == [3, 1, 2]

    def test_duplicate_seeds_rejected(self, reference_document):
        reference_document['seeds'] = [1, 1]
        with pytest.raises(SpecValidationError):
            experiment_config_from_dict(reference_document)

    def test_epsilon_range(self, reference_document):
        reference_document['epsilons'] = [1.0]
        with pytest.raises(SpecValidationError) as info:
            experiment_config_from_dict(reference_document)
        assert "epsilons/0" in str(info.value)

    def test_unknown_mode(self, reference_document):
        reference_document['modes'] = ['stall']
        with pytest.raises(SpecValidationError):
            experiment_config_from_dict(reference_document)

    def test_flow_sweep_keys(self, reference_document):
        reference_document['flow'].update(epsilons=[0.5], n_steps=20, modes=['terminal'])
        sweep = experiment_config_from_dict(reference_document).flow_sweep
        assert (sweep.epsilons, sweep.n_steps, sweep.modes) == ([0.5], 20, ['terminal'])

    def test_probe_settings(self, reference_document):
        reference_document['probe'] = {'delta': 0.01, 'n_steps': 12, 'seed': 4}
        probe = experiment_config_from_dict(reference_document).probe
        assert probe.delta == 0.01
        assert probe.n_steps == 12
        assert probe.seed == 4
        assert probe.epsilon_star == 0.05

    def test_without_flow(self, reference_document):
        del reference_document['flow']
        assert experiment_config_from_dict(reference_document).flow_spec is None


class TestFiles:
    """Test reading documents from disk."""

    def test_load_from_file(self, reference_document, write_config, tmp_path):
        reference_document['output_dir'] = str(tmp_path / 'out')
        path = write_config(reference_document)
        config = load_experiment_config(path)
        assert config.source == path
        assert config.output_dir == tmp_path / 'out'

    def test_default_output(self, reference_document, write_config, tmp_path):
        config = load_experiment_config(write_config(reference_document), default_output=tmp_path)
        assert config.output_dir == tmp_path

    def test_malformed_json(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{"map": ', encoding='utf-8')
        with pytest.raises(SpecValidationError) as info:
            load_json_document(path)
        assert "invalid JSON" in str(info.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(SpecValidationError) as info:
            load_experiment_config(tmp_path / 'absent.json')
        assert "not found" in str(info.value)


class TestFingerprint:
    """Test canonical JSON and fingerprints."""

    def test_key_order_irrelevant(self):
        assert fingerprint({'a': 1, 'b': [1.5, 2]}) == fingerprint({'b': [1.5, 2], 'a': 1})

    def test_value_sensitive(self):
        assert fingerprint({'a': 0.1}) != fingerprint({'a': 0.10000000000000002})

    def test_canonical_form(self):
        assert canonical_json({'b': 1, 'a': [0.5, True]}) == '{"a":[0.5,true],"b":1}'

    def test_numpy_values(self):
        assert canonical_json({'x': np.float64(0.25), 'v': np.arange(2)}) == '{"v":[0,1],"x":0.25}'

    def test_config_fingerprint_follows_document(self, reference_document):
        first = experiment_config_from_dict(reference_document)
        reference_document['n_steps'] = 10
        second = experiment_config_from_dict(reference_document)
        assert len(first.fingerprint) == 64
        assert first.fingerprint != second.fingerprint
