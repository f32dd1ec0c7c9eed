import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quanvo.data import (
    DYSPHONIA,
    HEALTHY,
    GRID_SIZES,
    PRESETS,
    AudioEntry,
    DataError,
    DatasetManifest,
    SynthEntry,
    kfold_split,
    label_index,
    read_manifest,
    severity_params,
    stratified_subsample,
    synth_vowel,
    synthetic_manifest,
    train_test_split,
    write_manifest,
)
from quanvo.dsp import stft

POOL = np.array([DYSPHONIA] * 171 + [HEALTHY] * 72)


class TestSubsample:
    @pytest.mark.parametrize("n, d, h", [(60, 42, 18), (240, 168, 72), (100, 70, 30), (140, 98, 42)])
    def test_class_counts(self, n, d, h):
        idx = stratified_subsample(POOL, n, seed=0)
        assert len(idx) == n == len(set(idx.tolist()))
        assert (POOL[idx] == DYSPHONIA).sum() == d
        assert (POOL[idx] == HEALTHY).sum() == h

    def test_round_half_up(self):
        # 0.7 * 85 = 59.5
        idx = stratified_subsample(POOL, 85, seed=0)
        assert (POOL[idx] == DYSPHONIA).sum() == 60

    def test_seeded(self):
        assert stratified_subsample(POOL, 60, seed=3).tolist() == stratified_subsample(POOL, 60, seed=3).tolist()
        assert stratified_subsample(POOL, 60, seed=3).tolist() != stratified_subsample(POOL, 60, seed=4).tolist()

    def test_insufficient_class_named(self):
        with pytest.raises(DataError, match="healthy"):
            stratified_subsample(POOL[:200], 100)

    def test_every_grid_size_fits(self):
        for n in GRID_SIZES:
            assert len(stratified_subsample(POOL, n, seed=n)) == n


class TestKFold:
    def test_sixty_into_ten(self):
        idx = stratified_subsample(POOL, 60, seed=0)
        folds = kfold_split(idx, POOL[idx], 10, seed=0)
        assert [len(v) for _, v in folds] == [6] * 10

    @given(st.integers(20, 240), st.integers(2, 10), st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_partition_properties(self, n, k, seed):
        idx = stratified_subsample(POOL, n, seed=seed)
        labels = POOL[idx]
        folds = kfold_split(idx, labels, k, seed=seed)
        vals = [v for _, v in folds]
        assert sorted(np.concatenate(vals).tolist()) == sorted(idx.tolist())
        sizes = [len(v) for v in vals]
        assert max(sizes) - min(sizes) <= 1
        for tr, v in folds:
            assert not set(tr.tolist()) & set(v.tolist())
            assert len(tr) + len(v) == n
        for c in (HEALTHY, DYSPHONIA):
            per_fold = [(POOL[v] == c).sum() for v in vals]
            assert max(per_fold) - min(per_fold) <= 1

    def test_fold_ratio_within_one_sample(self):
        idx = stratified_subsample(POOL, 240, seed=1)
        for _, v in kfold_split(idx, POOL[idx], 10, seed=1):
            d = (POOL[v] == DYSPHONIA).sum()
            assert abs(d - 0.7 * len(v)) <= 1

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            kfold_split(np.arange(5), np.zeros(5, int), 6)


class TestTrainTestSplit:
    def test_default_counts(self):
        labels = np.array([DYSPHONIA] * 216 + [HEALTHY] * 88)
        plan = train_test_split(labels, 61, 240, seed=0)
        assert len(plan.test) == 61 and len(plan.train) == 243
        assert not set(plan.train.tolist()) & set(plan.test.tolist())
        assert (labels[plan.train] == HEALTHY).sum() >= 72
        assert (labels[plan.train] == DYSPHONIA).sum() >= 168

    def test_fixed_for_a_seed(self):
        labels = np.array([DYSPHONIA] * 216 + [HEALTHY] * 88)
        a = train_test_split(labels, seed=5)
        b = train_test_split(labels, seed=5)
        assert a.test.tolist() == b.test.tolist()

    def test_too_small(self):
        with pytest.raises(DataError):
            train_test_split(np.array([DYSPHONIA] * 100 + [HEALTHY] * 50))


class TestManifest:
    def test_audio_round_trip(self, tmp_path):
        m = DatasetManifest([AudioEntry("a.wav", "healthy"), AudioEntry("b/c.wav", "dysphonia", 0.25, 1.5)])
        write_manifest(tmp_path / "m.csv", m)
        assert (tmp_path / "m.csv").read_text().splitlines()[0] == "path,label,offset_s,duration_s"
        assert read_manifest(tmp_path / "m.csv") == m

    def test_synth_round_trip(self, tmp_path):
        m = synthetic_manifest(10, 5, seed=1)
        write_manifest(tmp_path / "s.csv", m)
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == "synth,label,f0,jitter,shimmer,hnr,seed"
        assert read_manifest(tmp_path / "s.csv") == m

    def test_duplicates_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            DatasetManifest([AudioEntry("a.wav", "healthy"), AudioEntry("a.wav", "dysphonia")])

    def test_bad_label(self):
        with pytest.raises(DataError):
            label_index("hoarse")

    def test_bad_header(self, tmp_path):
        (tmp_path / "m.csv").write_text("file,class\nx,healthy\n")
        with pytest.raises(DataError):
            read_manifest(tmp_path / "m.csv")

    def test_counts(self):
        m = synthetic_manifest(216, 88, seed=0)
        assert m.counts == {"healthy": 88, "dysphonia": 216}
        assert m.is_synthetic


class TestSynthVowel:
    def test_exactly_periodic_without_perturbation(self):
        clip = synth_vowel(100.0, 0.2, hnr=math.inf, sample_rate=8000)
        x = clip.samples
        np.testing.assert_allclose(x[80:], x[:-80], atol=1e-12)

    def test_seeded(self):
        a = synth_vowel(150.0, 0.3, 2.5, 8.0, 8.0, seed=4)
        b = synth_vowel(150.0, 0.3, 2.5, 8.0, 8.0, seed=4)
        assert a.samples.tobytes() == b.samples.tobytes()

    def test_length_and_rate(self):
        clip = synth_vowel(200.0, 2.0)
        assert clip.sample_rate == 44100 and len(clip) == 88200

    @pytest.mark.parametrize("f0", [79.0, 401.0])
    def test_f0_range(self, f0):
        with pytest.raises(ValueError):
            synth_vowel(f0)

    def test_dysphonic_preset_has_lower_hnr(self):
        def harmonic_to_noise(clip, f0):
            power = np.mean(np.abs(stft(clip)) ** 2, axis=1)
            freqs = np.arange(len(power)) * clip.sample_rate / 2048
            near = np.zeros(len(power), bool)
            for h in range(1, 11):
                near |= np.abs(freqs - h * f0) < 0.25 * f0
            band = freqs < 11 * f0
            return power[near & band].sum() / power[~near & band].sum()

        ratios = {}
        for name, p in PRESETS.items():
            ratios[name] = np.mean([harmonic_to_noise(synth_vowel(150.0, 1.0, seed=s, **p), 150.0) for s in range(3)])
        assert ratios["dysphonia"] < ratios["healthy"]

    def test_severity_endpoints_match_presets(self):
        assert severity_params(0.0) == pytest.approx(PRESETS["healthy"])
        assert severity_params(1.0) == pytest.approx(PRESETS["dysphonia"])

    def test_synthetic_manifest_scale(self):
        m = synthetic_manifest()
        assert len(m) == 304
        assert all(isinstance(e, SynthEntry) and 90 <= e.f0 <= 260 for e in m.entries)
