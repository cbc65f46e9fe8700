import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linktrace import _kernels
from linktrace.designs import SampleNetwork
from linktrace.resampler import (
    InclusionFrequencies,
    ProcessState,
    ResampleConfig,
    ZeroFrequencyError,
    adaptive_removal_rate,
    process_resamples,
    read_frequencies,
    repeated_resamples,
    resample,
    step_process,
    with_replacement_counts,
    write_frequencies,
)
from linktrace.simharness.oracle import enumerate_exact_inclusion

from conftest import path_graph


def forest(recruiter):
    rec = np.asarray(recruiter, dtype=np.int64)
    n = len(rec)
    return SampleNetwork(
        node=np.arange(n, dtype=np.int64),
        recruiter=rec,
        seed_flag=(rec < 0).astype(np.int64),
        day=np.zeros(n, dtype=np.int64),
        degree=np.ones(n, dtype=np.int64),
        ties=np.zeros((0, 2), dtype=np.int64),
    )


@pytest.mark.parametrize("n_t, target, q", [(500, 400, 0.2), (400, 400, 0.0), (401, 400, 1 / 401), (0, 400, 0.0), (10, 400, 0.0)])
def test_adaptive_removal_rate(n_t, target, q):
    assert adaptive_removal_rate(n_t, target) == q
    assert _kernels.removal_rate(n_t, target) == q


def test_empty_state_absorbing_without_reseeding():
    net = forest([-1, 0, 1])
    cfg = ResampleConfig(n_target=3, p_trace=0.5, p_reseed=0.0)
    s = step_process(ProcessState(set()), net, cfg, np.random.default_rng(0))
    assert s.members == set() and s.step == 1


def test_path_traced_surely_from_middle():
    net = forest([-1, 0, 1])
    cfg = ResampleConfig(n_target=3, p_trace=1.0, p_reseed=0.0)
    s = step_process(ProcessState({1}), net, cfg, np.random.default_rng(0))
    assert s.members == {0, 1, 2}
    c, _, _ = _kernels.process_chain(*net.csr(), 3, 1.0, 0.0, 0, 1, 0, np.array([1]), np.zeros(0, np.int64), np.zeros(0, np.int64))
    assert c.tolist() == [1, 1, 1]


def test_single_node_never_removed():
    net = forest([-1])
    f = process_resamples(net, ResampleConfig(n_target=1, iterations=5000, burn_in=0, p_reseed=0.01), 3).f
    # included after the first reseed and never removed afterwards
    assert f[0] > 0.9
    f = process_resamples(net, ResampleConfig(n_target=1, iterations=5000, burn_in=2000, p_reseed=0.01), 3).f
    assert f[0] == 1.0


def test_frequency_arithmetic():
    fr = InclusionFrequencies(np.array([7500, 10000, 0]), 10000)
    assert fr.f.tolist() == [0.75, 1.0, 0.0]
    with pytest.raises(ZeroFrequencyError, match="node"):
        fr.require_positive()
    g = InclusionFrequencies(np.array([2 + 0 + 1 + 1, 4, 0]), 4, with_replacement=True)
    assert g.g.tolist() == [1.0, 1.0, 0.0]
    with pytest.raises(ZeroFrequencyError):
        g.require_positive()


def test_repeated_single_iteration_and_full_seeding():
    net = forest([-1, 0, 0, 1, 3])
    f = repeated_resamples(net, ResampleConfig(mode="repeated", iterations=1, n_target=3, p_seed=0.3, p_trace=0.5), 1).f
    assert set(f.tolist()) <= {0.0, 1.0}
    f = repeated_resamples(net, ResampleConfig(mode="repeated", iterations=50, n_target=None, p_seed=1.0), 1).f
    assert np.all(f == 1.0)


def test_repeated_hits_target_exactly():
    net = forest([-1, 0, 0, 1, 3, 4, 4, 2, 7, 8])
    fr = repeated_resamples(net, ResampleConfig(mode="repeated", iterations=2000, n_target=6, p_seed=0.2, p_trace=0.4), 2)
    assert np.all(fr.sizes == 6)
    assert fr.counts.sum() == 6 * 2000


def test_four_node_path_matches_enumeration():
    g = path_graph(4)
    exact = enumerate_exact_inclusion(g, 0.5, 0.5, waves=1).phi
    T = 10**6
    cfg = ResampleConfig(mode="repeated", iterations=T, n_target=None, p_seed=0.5, p_trace=0.5, p_reseed=0.0, waves=1)
    f = repeated_resamples(g, cfg, 42).f
    assert np.all(np.abs(f - exact) <= 3 * np.sqrt(exact * (1 - exact) / T))
    # hand check of the end node: seeded, or its neighbor seeded and the link traced
    assert exact[0] == 0.5 + 0.5 * 0.5 * 0.5


def test_kernel_step_matches_reference_step():
    # distribution of the next state from a fixed state, both implementations
    net = forest([-1, 0, 0, 1, 1, 2, 5, 6])
    cfg = ResampleConfig(n_target=4, p_trace=0.4, p_reseed=0.05)
    start = {0, 2, 5, 6}
    reps = 20000
    rng = np.random.default_rng(7)
    ref = np.zeros(len(net))
    for _ in range(reps):
        for i in step_process(ProcessState(start), net, cfg, rng).members:
            ref[i] += 1
    indptr, indices = net.csr()
    init = np.array(sorted(start), dtype=np.int64)
    none = np.zeros(0, dtype=np.int64)
    ker = np.zeros(len(net))
    for s in range(reps):
        c, _, _ = _kernels.process_chain(indptr, indices, 4, 0.4, 0.05, 0, 1, s, init, none, none)
        ker += c
    p1, p2 = ref / reps, ker / reps
    se = np.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / reps)
    assert np.all(np.abs(p1 - p2) <= 4.5 * np.maximum(se, 1e-9))


def test_stationary_size_and_frequency_range(rds_sample):
    fr = process_resamples(rds_sample, ResampleConfig(iterations=20000), 5)
    assert abs(fr.mean_size - 400) <= 40
    f = fr.f
    assert np.all((f >= 0) & (f <= 1))
    # T f_i is an integer: the count of resamples holding node i
    assert fr.counts.dtype.kind == "i"
    assert np.array_equal(f, fr.counts / fr.iterations)
    assert np.allclose(f * fr.iterations, np.rint(f * fr.iterations), rtol=0, atol=1e-9)


def test_equal_degree_nodes_get_unequal_frequencies(rds_sample):
    f = process_resamples(rds_sample, ResampleConfig(iterations=20000), 6).f
    deg1 = f[rds_sample.degree == 1]
    assert len(deg1) > 10
    assert np.var(deg1) > 0


def test_two_chains_agree(rds_sample):
    cfg = ResampleConfig(iterations=50000)
    a = process_resamples(rds_sample, cfg, 1).f
    b = process_resamples(rds_sample, cfg, 2).f
    assert np.max(np.abs(a - b)) <= 0.03


def test_pooled_chains_and_determinism(rds_sample):
    cfg = ResampleConfig(iterations=6000, chains=3, burn_in=200)
    a = process_resamples(rds_sample, cfg, 9)
    b = process_resamples(rds_sample, cfg, 9)
    assert np.array_equal(a.counts, b.counts)
    assert len(a.sizes) == 6000


def test_raising_trace_rate_raises_mean_frequency(rds_sample):
    # common random numbers: same seeds, only p differs; p_r = 0 in repeated mode
    lo = repeated_resamples(rds_sample, ResampleConfig(mode="repeated", iterations=300, n_target=None, p_seed=0.02, p_trace=0.05, p_reseed=0.0, waves=3), 4)
    hi = repeated_resamples(rds_sample, ResampleConfig(mode="repeated", iterations=300, n_target=None, p_seed=0.02, p_trace=0.3, p_reseed=0.0, waves=3), 4)
    assert hi.f.mean() > lo.f.mean()


def test_doubling_iterations_halves_variance():
    net = forest([-1, 0, 0, 1, 3, 4, 2, 6, 6, 8])
    base = dict(mode="repeated", n_target=None, p_seed=0.3, p_trace=0.4, p_reseed=0.0, waves=2)
    seeds = np.random.SeedSequence(3).generate_state(600)
    v = []
    for T, ss in ((1000, seeds[:300]), (2000, seeds[300:])):
        fs = np.array([repeated_resamples(net, ResampleConfig(iterations=T, **base), int(s)).f for s in ss])
        v.append(fs.var(axis=0).sum())
    assert abs(v[0] / v[1] - 2.0) <= 0.25 * 2.0


def test_joint_frequencies_bounded(rds_sample):
    fr = process_resamples(rds_sample, ResampleConfig(iterations=5000, pairs="edges"), 3)
    f = fr.f
    i, j = fr.pairs[:, 0], fr.pairs[:, 1]
    assert len(fr.pairs) == len(rds_sample.edges("ties"))
    assert np.all(fr.fij <= np.minimum(f[i], f[j]))
    joint = fr.joint()
    a, b = fr.pairs[0]
    assert joint[(a, b)] == fr.fij[0]


def test_all_pairs_on_small_network():
    net = forest([-1, 0, 1, 1])
    fr = process_resamples(net, ResampleConfig(iterations=3000, n_target=2, pairs="all", burn_in=10), 1)
    assert len(fr.pairs) == 6
    f = fr.f
    assert np.all(fr.fij <= np.minimum(f[fr.pairs[:, 0]], f[fr.pairs[:, 1]]))


def test_unreachable_node_without_reseeding_is_flagged():
    net = forest([-1, 0, 1, -1])
    cfg = ResampleConfig(mode="repeated", iterations=200, n_target=None, p_seed=0.0, p_trace=0.5, p_reseed=0.0)
    fr = repeated_resamples(net, cfg, 0)
    with pytest.raises(ZeroFrequencyError):
        fr.require_positive()


def test_with_replacement_counts(rds_sample):
    fr = with_replacement_counts(rds_sample, ResampleConfig(mode="process-with-replacement", iterations=3000, burn_in=500), 2)
    assert fr.with_replacement
    assert abs(fr.mean_size - 400) <= 40
    assert fr.g.sum() == pytest.approx(fr.mean_size)
    assert resample(rds_sample, ResampleConfig(mode="process-with-replacement", iterations=10, burn_in=0), 2).with_replacement


def test_config_validation():
    with pytest.raises(ValueError, match="mode"):
        ResampleConfig(mode="bogus").validate()
    with pytest.raises(ValueError, match="n_target"):
        ResampleConfig(n_target=500).validate(sample_size=100)
    with pytest.raises(ValueError):
        ResampleConfig(p_trace=1.5).validate()
    assert ResampleConfig().reseed_rate == 0.01
    assert ResampleConfig(mode="repeated").reseed_rate == 0.001


def test_frequency_file_round_trip(tmp_path):
    fr = InclusionFrequencies(np.array([1, 3, 7]), 9, pairs=np.array([[0, 2]]), pair_counts=np.array([1]))
    write_frequencies(fr, tmp_path / "f.csv", ids=[10, 20, 30], pairs_path=tmp_path / "p.csv")
    assert np.array_equal(read_frequencies(tmp_path / "f.csv", ids=[30, 10, 20]), fr.f[[2, 0, 1]])
    assert (tmp_path / "p.csv").read_text().splitlines()[1] == f"10,30,{1 / 9!r}"


trees = st.lists(st.integers(0, 10**6), min_size=1, max_size=30).map(
    lambda xs: [-1] + [x % (k + 1) for k, x in enumerate(xs[1:])]
)


@given(trees, st.integers(1, 10), st.floats(0.0, 1.0), st.floats(0.0, 0.2), st.integers(0, 2**31))
@settings(max_examples=60, deadline=None)
def test_process_invariants(rec, target, p, p_r, seed):
    net = forest(rec)
    target = min(target, len(rec))
    fr = process_resamples(net, ResampleConfig(iterations=200, burn_in=20, n_target=target, p_trace=p, p_reseed=p_r), seed)
    assert np.all((fr.f >= 0) & (fr.f <= 1))
    assert fr.counts.sum() == fr.sizes.sum()
    assert np.all(fr.sizes <= len(rec))
