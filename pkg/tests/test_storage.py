import json
import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_array_equal

from koopman_ctl import exceptions, storage
from koopman_ctl.hdmd import LiftedModel, fit, spectrum
from koopman_ctl.observables import LiftedSnapshotSet, ObservableDictionary
from koopman_ctl.reduce import ReducedModel, project, select_modes
from koopman_ctl.surrogate.plant import Trajectory


class StorageTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()


class TestTrajectoryFiles(StorageTestCase):
    def setUp(self):
        super().setUp()
        rng = np.random.default_rng(0)
        self.trajectory = Trajectory(sample_dt=0.02, states=rng.normal(size=(6, 45)),
                                     inputs=rng.uniform(0.3, 0.85, size=(5, 3)))

    def test_header_and_exact_values(self):
        path = self.root / 'regime.csv'
        storage.write_trajectory(path, self.trajectory)
        lines = path.read_text().splitlines()

        self.assertTrue(lines[0].startswith('t,u1,u2,u3,x1,x2'))
        self.assertTrue(lines[0].endswith(',x45'))
        self.assertEqual(len(lines), 7)
        self.assertTrue(lines[-1].split(',')[1:4] == ['nan', 'nan', 'nan'])

        loaded = storage.read_trajectory(path, 0.02)
        assert_array_equal(loaded.states, self.trajectory.states)
        assert_array_equal(loaded.inputs, self.trajectory.inputs)

    def test_identical_bytes(self):
        first, second = self.root / 'a.csv', self.root / 'b.csv'

        self.assertEqual(storage.write_trajectory(first, self.trajectory),
                         storage.write_trajectory(second, self.trajectory))
        self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_parse_error_names_the_line(self):
        path = self.root / 'broken.csv'
        storage.write_trajectory(path, self.trajectory)
        lines = path.read_text().splitlines()
        lines[3] = lines[3].replace(',', ',oops', 1)
        path.write_text('\n'.join(lines) + '\n')

        with self.assertRaises(exceptions.ArtifactParseError) as ctx:
            storage.read_trajectory(path, 0.02)

        self.assertEqual(ctx.exception.line, 4)
        self.assertEqual(exceptions.exit_code(ctx.exception), 2)

    def test_wrong_header(self):
        path = self.root / 'other.csv'
        path.write_text('a,b\n1,2\n')

        with self.assertRaises(exceptions.ArtifactParseError):
            storage.read_trajectory(path)

    def test_signal_file(self):
        path = self.root / 'signal.csv'
        u = np.full((4, 3), 0.3)
        storage.write_inputs(path, np.arange(4) * 0.02, u, 1 - u)

        self.assertEqual(path.read_text().splitlines()[0], 't,u1,u2,u3,v1,v2,v3')
        assert_array_equal(storage.read_inputs(path), u)

    def test_atomic_write_leaves_no_temporary_files(self):
        storage.atomic_write(self.root / 'nested' / 'out.txt', 'content\n')

        self.assertEqual(os.listdir(self.root / 'nested'), ['out.txt'])


class TestModelFiles(StorageTestCase):
    def setUp(self):
        super().setUp()
        rng = np.random.default_rng(1)
        A = rng.normal(size=(6, 6)) / 4
        X = rng.normal(size=(6, 40))
        U = rng.normal(size=(2, 40))
        self.data = LiftedSnapshotSet(X=X, X_plus=A @ X + rng.normal(size=(6, 2)) @ U, U=U,
                                      dictionary=ObservableDictionary('delay', 0, 6), sample_dt=0.02,
                                      times=np.arange(40))
        self.model = fit(self.data)

    def test_lifted_model(self):
        path = self.root / 'model.json'
        storage.save_model(path, self.model, {'data/regime1.csv': 'abc'})
        loaded = storage.load_model(path)

        self.assertIsInstance(loaded, LiftedModel)
        assert_array_equal(loaded.A, self.model.A)
        assert_array_equal(loaded.B, self.model.B)
        self.assertEqual(loaded.fingerprint, self.model.fingerprint)
        self.assertEqual(loaded.dictionary, self.model.dictionary)
        self.assertEqual(loaded.training_snapshots, 40)

    def test_reduced_model(self):
        spec = spectrum(self.model, self.data)
        rm = project(self.model, spec, select_modes(spec, 3))
        path = self.root / 'reduced.json'
        storage.save_model(path, rm)
        loaded = storage.load_model(path)

        self.assertIsInstance(loaded, ReducedModel)
        assert_array_equal(loaded.encoder, rm.encoder)
        assert_array_equal(loaded.basis, rm.basis)
        self.assertEqual(loaded.realifier, rm.realifier)
        self.assertEqual(loaded.parent, self.model.fingerprint)

    def test_floats_match_the_csv_text(self):
        model = LiftedModel(A=np.array([[0.1]]), B=np.array([[1 / 3]]), C=np.eye(1),
                            dictionary=ObservableDictionary('delay', 0, 1), sample_dt=0.02, training_snapshots=1)
        json_path, csv_path = self.root / 'model.json', self.root / 'table.csv'
        storage.save_model(json_path, model)
        storage.write_table(csv_path, ['a', 'b'], [[0.1, 1 / 3]])

        cells = csv_path.read_text().splitlines()[1].split(',')
        data = json.loads(json_path.read_text())
        self.assertEqual(cells, ['0.1', '0.3333333333333333'])
        self.assertEqual(json.dumps(data['A']['data'] + data['B']['data']), f'[{cells[0]}, {cells[1]}]')

    def test_monomial_scale_survives(self):
        model = LiftedModel(A=np.eye(2), B=np.zeros((2, 1)), C=np.eye(1, 2) / 1000,
                            dictionary=ObservableDictionary('monomial', 2, 1, 1000.0), sample_dt=0.02,
                            training_snapshots=1)
        path = self.root / 'monomial.json'
        storage.save_model(path, model)

        self.assertEqual(storage.load_model(path).dictionary.monomial_scale, 1000.0)

    def test_malformed_json(self):
        path = self.root / 'model.json'
        path.write_text('{\n  "format": \n')

        with self.assertRaises(exceptions.ArtifactParseError) as ctx:
            storage.load_model(path)

        self.assertGreaterEqual(ctx.exception.line, 2)

    def test_unknown_format(self):
        with self.assertRaises(exceptions.ConfigError):
            storage.model_from_dict({'format': 'something-else'})


class TestManifest(StorageTestCase):
    def setUp(self):
        super().setUp()
        self.source = self.root / 'data' / 'source.csv'
        self.artifact = self.root / 'models' / 'artifact.json'
        manifest = storage.Manifest(self.root)
        manifest.record(self.source, storage.atomic_write(self.source, 'a,b\n1,2\n'))
        manifest.record(self.artifact, storage.atomic_write(self.artifact, '{}\n'), [self.source])

    def test_verify(self):
        digest = storage.Manifest(self.root).verify(self.artifact)
        self.assertEqual(digest, storage.fingerprint(self.artifact))

    def test_changed_input(self):
        self.source.write_text('a,b\n1,3\n')

        with self.assertRaises(exceptions.StaleArtifact) as ctx:
            storage.Manifest(self.root).verify(self.artifact)

        self.assertEqual(exceptions.exit_code(ctx.exception), 4)

    def test_changed_artifact(self):
        self.artifact.write_text('{"edited": true}\n')

        with self.assertRaises(exceptions.StaleArtifact):
            storage.Manifest(self.root).verify(self.artifact)

    def test_unrecorded_artifact(self):
        other = self.root / 'models' / 'other.json'
        other.write_text('{}\n')

        with self.assertRaises(exceptions.StaleArtifact):
            storage.Manifest(self.root).verify(other)

    def test_missing_artifact(self):
        self.artifact.unlink()

        with self.assertRaises(FileNotFoundError):
            storage.Manifest(self.root).verify(self.artifact)


if __name__ == '__main__':
    unittest.main()
