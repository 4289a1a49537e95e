import json

import numpy as np
import pytest

from asefd.ingest import (
    AdcSpec,
    Axis,
    DatasetName,
    EmptyTrialFileError,
    Label,
    MalformedRowError,
    SingleSubjectError,
    SynthKind,
    UnknownActivityCodeError,
    load_manifest,
    load_trial_csv,
    make_manifest,
    make_synth_manifest,
    partition_loso,
    save_dataset,
    synth_trial,
    write_trial_csv,
)


def _write_csv(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestLoadTrialCsv:
    def test_adc_conversion(self, tmp_path):
        # raw value 4096 with a 16 g / 13-bit sensor maps to exactly 16 g...
        path = _write_csv(tmp_path / "F01_S01.csv", ["t,ax,ay,az", "0,4096,0,1024"])
        trial = load_trial_csv(path, adc_spec=AdcSpec(range_g=16.0, resolution_bits=13), rate_hz=200)
        assert trial.samples[0, 0] == pytest.approx(16.0)
        # ...and raw zero maps to zero under any spec
        assert trial.samples[0, 1] == 0.0

    def test_passthrough_without_adc(self, tmp_path):
        path = _write_csv(tmp_path / "A01_S01.csv", ["t,ax,ay,az", "0,0.1,-0.98,0.05"])
        trial = load_trial_csv(path, rate_hz=200)
        np.testing.assert_array_equal(trial.samples[0], [0.1, -0.98, 0.05])
        assert trial.label is Label.ADL
        assert trial.subject_id == "S01"
        assert trial.activity_code == "A01"

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_trial_csv(tmp_path / "F01_S01.csv", rate_hz=200)

    def test_empty_file(self, tmp_path):
        path = (tmp_path / "F01_S01.csv")
        path.write_text("", encoding="utf-8")
        with pytest.raises(EmptyTrialFileError):
            load_trial_csv(path, rate_hz=200)

    def test_header_only_file(self, tmp_path):
        path = _write_csv(tmp_path / "F01_S01.csv", ["t,ax,ay,az"])
        with pytest.raises(EmptyTrialFileError):
            load_trial_csv(path, rate_hz=200)

    def test_malformed_row(self, tmp_path):
        path = _write_csv(tmp_path / "F01_S01.csv", ["t,ax,ay,az", "0,0.1,0.2,0.3", "1,oops,0,0"])
        with pytest.raises(MalformedRowError) as err:
            load_trial_csv(path, rate_hz=200)
        assert err.value.row_number == 2

    def test_unknown_activity_code(self, tmp_path):
        path = _write_csv(tmp_path / "X01_S01.csv", ["t,ax,ay,az", "0,0,0,1"])
        with pytest.raises(UnknownActivityCodeError):
            load_trial_csv(path, rate_hz=200)

    def test_rate_inferred_from_time_column(self, tmp_path):
        lines = ["t,ax,ay,az"] + [f"{i / 100.0},0,0,1" for i in range(10)]
        trial = load_trial_csv(_write_csv(tmp_path / "F01_S01.csv", lines))
        assert trial.rate_hz == pytest.approx(100.0)

    def test_pure_loading(self, tmp_path):
        lines = ["t,ax,ay,az"] + [f"{i},{i * 0.01},{-i * 0.02},{1 + i * 0.001}" for i in range(20)]
        path = _write_csv(tmp_path / "D05_S02.csv", lines)
        a = load_trial_csv(path, rate_hz=50)
        b = load_trial_csv(path, rate_hz=50)
        np.testing.assert_array_equal(a.samples, b.samples)
        assert a.subject_id == b.subject_id and a.label == b.label

    def test_extra_columns_are_ignored(self, tmp_path):
        # gyro/magnetometer columns may be present; only the schema columns load
        lines = ["t,ax,ay,az,gx,gy,gz", "0,0.1,0.2,0.3,99,99,99", "0.01,0.1,0.2,0.3,99,99,99"]
        trial = load_trial_csv(_write_csv(tmp_path / "F01_S01.csv", lines), rate_hz=100)
        assert trial.samples.shape == (2, 3)
        assert trial.samples.max() < 1.0


class TestSynthTrial:
    def test_seeded_determinism(self):
        a = synth_trial(SynthKind.FALL_LIKE, 7, 200, 10)
        b = synth_trial(SynthKind.FALL_LIKE, 7, 200, 10)
        assert a.samples.tobytes() == b.samples.tobytes()

    def test_still_trial_stays_near_one_g(self):
        trial = synth_trial(SynthKind.ADL_STILL, 1, 200, 10)
        assert trial.norms().max() < 1.5

    def test_fall_trial_has_spike(self):
        trial = synth_trial(SynthKind.FALL_LIKE, 1, 200, 10)
        assert trial.norms().max() >= 3.0

    @pytest.mark.parametrize("seed", range(12))
    def test_fall_peak_unique_and_interior(self, seed):
        trial = synth_trial(SynthKind.FALL_LIKE, seed, 200, 4)
        norms = trial.norms()
        peak = int(np.argmax(norms))
        assert 0 < peak < len(norms) - 1
        assert (norms == norms[peak]).sum() == 1

    def test_walk_trial_is_periodic_not_fall_like(self):
        trial = synth_trial(SynthKind.ADL_WALK, 5, 200, 8)
        assert trial.norms().max() < 2.0
        assert trial.label is Label.ADL

    def test_bad_duration_and_rate(self):
        with pytest.raises(ValueError):
            synth_trial(SynthKind.ADL_STILL, 0, 200, 2.0)
        with pytest.raises(ValueError):
            synth_trial(SynthKind.ADL_STILL, 0, -1, 10.0)


class TestPartitionLoso:
    def test_three_subjects_three_folds(self):
        manifest = make_synth_manifest(3, 4, seed=0, duration_s=4)
        folds = partition_loso(manifest)
        assert len(folds) == 3

    def test_twenty_one_subjects(self):
        manifest = make_synth_manifest(21, 1, seed=0, duration_s=4)
        assert len(partition_loso(manifest)) == 21

    def test_partition_properties(self):
        manifest = make_synth_manifest(5, 6, seed=2, duration_s=4)
        folds = partition_loso(manifest)
        assert sum(len(f.test_trials) for f in folds) == len(manifest.trials)
        for fold in folds:
            train_subjects = {t.subject_id for t in fold.train_trials}
            test_subjects = {t.subject_id for t in fold.test_trials}
            assert test_subjects == {fold.test_subject}
            assert not train_subjects & test_subjects
        # every trial appears in exactly one test set
        seen = [id(t) for f in folds for t in f.test_trials]
        assert len(seen) == len(set(seen)) == len(manifest.trials)

    def test_single_subject_rejected(self):
        manifest = make_synth_manifest(1, 4, seed=0, duration_s=4)
        with pytest.raises(SingleSubjectError):
            partition_loso(manifest)


class TestManifestRoundtrip:
    def test_save_and_load(self, tmp_path):
        manifest = make_synth_manifest(2, 3, seed=1, duration_s=4)
        path = save_dataset(manifest, tmp_path)
        loaded = load_manifest(path)
        assert loaded.dataset_name is DatasetName.SYNTHETIC
        assert loaded.vertical_axis is Axis.Z
        assert len(loaded.trials) == len(manifest.trials)
        by_key = {(t.activity_code, t.subject_id): t for t in manifest.trials}
        for trial in loaded.trials:
            original = by_key[(trial.activity_code, trial.subject_id)]
            assert trial.label is original.label
            assert trial.rate_hz == original.rate_hz
            np.testing.assert_allclose(trial.samples, original.samples, atol=1e-12)

    def test_exclude_subjects(self, tmp_path):
        manifest = make_synth_manifest(3, 2, seed=1, duration_s=4)
        path = save_dataset(manifest, tmp_path)
        doc = json.loads(path.read_text())
        doc["exclude_subjects"] = ["S02"]
        path.write_text(json.dumps(doc))
        loaded = load_manifest(path)
        assert "S02" not in loaded.subject_ids
        assert len(loaded.subject_ids) == 2

    def test_dataset_defaults(self):
        trial = synth_trial(SynthKind.ADL_STILL, 0, 238, 6)
        manifest = make_manifest(DatasetName.FALLALLD, [trial])
        assert manifest.vertical_axis is Axis.Y
        assert manifest.window_backward_s == pytest.approx(1.23)
        assert manifest.window_forward_s == pytest.approx(2.0)

    def test_trial_csv_roundtrip(self, tmp_path):
        trial = synth_trial(SynthKind.FALL_LIKE, 3, 200, 4, subject_id="S09")
        write_trial_csv(trial, tmp_path / "F01_S09.csv")
        back = load_trial_csv(tmp_path / "F01_S09.csv", rate_hz=200)
        np.testing.assert_array_equal(back.samples, trial.samples)
