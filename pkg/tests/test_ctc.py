import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signstream.autodiff import Tensor, log_softmax
from signstream.autodiff.gradcheck import check_tensor_gradients
from signstream.ctc import (
    FramePosteriors,
    best_path_decode,
    collapse,
    ctc_brute_force,
    ctc_loss,
    ensemble_posteriors,
    prefix_beam_decode,
    read_posterior_file,
    required_frames,
    write_posterior_file,
)
from signstream.errors import InfeasibleTargetError


def random_posteriors(rng, T, n_symbols):
    z = rng.normal(size=(T, n_symbols)) * 1.5
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def exhaustive_best_labeling(probs, max_len=None):
    """Most probable labeling by brute-force marginalization over labelings."""
    T, n_symbols = probs.shape
    max_len = T if max_len is None else max_len
    best_seq, best_p = [], ctc_brute_force(probs, [])
    import itertools

    for length in range(1, max_len + 1):
        for seq in itertools.product(range(1, n_symbols), repeat=length):
            if required_frames(seq) > T:
                continue
            p = ctc_brute_force(probs, list(seq))
            if p > best_p or (p == best_p and list(seq) < best_seq):
                best_seq, best_p = list(seq), p
    return best_seq


# ----------------------------------------------------------------------- loss


def test_single_frame_single_gloss():
    probs = random_posteriors(np.random.default_rng(0), 1, 4)
    loss = ctc_loss(np.log(probs), [2])
    assert loss.item() == pytest.approx(-np.log(probs[0, 2]), abs=1e-12)


def test_two_frames_single_gloss_three_paths():
    probs = random_posteriors(np.random.default_rng(1), 2, 3)
    a = 1
    expected = (
        probs[0, a] * probs[1, a]
        + probs[0, a] * probs[1, 0]
        + probs[0, 0] * probs[1, a]
    )
    loss = ctc_loss(np.log(probs), [a])
    assert loss.item() == pytest.approx(-np.log(expected), abs=1e-10)


def test_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(2)
    for _ in range(150):
        T = int(rng.integers(1, 7))
        V = int(rng.integers(1, 5))
        U = int(rng.integers(0, 4))
        target = rng.integers(1, V + 1, size=U).tolist()
        if required_frames(target) > T:
            continue
        probs = random_posteriors(rng, T, V + 1)
        expected = ctc_brute_force(probs, target)
        loss = ctc_loss(np.log(probs), target)
        assert abs(loss.item() - (-np.log(expected))) < 1e-6


def test_loss_probability_in_unit_interval():
    rng = np.random.default_rng(3)
    for _ in range(25):
        probs = random_posteriors(rng, 5, 4)
        target = [1, 2]
        p = np.exp(-ctc_loss(np.log(probs), target).item())
        assert 0.0 < p <= 1.0


def test_forced_single_path_instance():
    # T frames, target of T distinct glosses: the only feasible path emits
    # one gloss per frame, so the loss is the product of those probabilities.
    probs = random_posteriors(np.random.default_rng(4), 3, 4)
    target = [1, 2, 3]
    expected = probs[0, 1] * probs[1, 2] * probs[2, 3]
    assert ctc_loss(np.log(probs), target).item() == pytest.approx(
        -np.log(expected), abs=1e-10
    )


def test_infeasible_target_raises_typed_error():
    probs = random_posteriors(np.random.default_rng(5), 2, 3)
    with pytest.raises(InfeasibleTargetError):
        ctc_loss(np.log(probs), [1, 1])  # repeat needs a separating blank
    with pytest.raises(InfeasibleTargetError):
        ctc_loss(np.log(probs), [1, 2, 1])


def test_input_length_masks_padded_frames():
    rng = np.random.default_rng(6)
    probs = random_posteriors(rng, 4, 3)
    padded = np.vstack([probs, random_posteriors(rng, 2, 3)])
    full = ctc_loss(np.log(probs), [1, 2])
    masked = ctc_loss(np.log(padded), [1, 2], input_length=4)
    assert masked.item() == pytest.approx(full.item(), abs=1e-12)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    for target in ([1], [1, 2], [2, 2], [1, 2, 1]):
        lp = Tensor(rng.normal(size=(5, 4)), requires_grad=True, name="lp")
        errs = check_tensor_gradients(
            lambda: ctc_loss(log_softmax(lp), target), [lp]
        )
        assert max(errs.values()) < 1e-4


def test_gradient_with_input_length_leaves_pad_rows_zero():
    lp = Tensor(np.random.default_rng(8).normal(size=(6, 3)), requires_grad=True)
    ctc_loss(log_softmax(lp), [1], input_length=3).backward()
    assert np.all(lp.grad[3:] == 0.0)


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_permutation_covariance(data):
    rng = np.random.default_rng(data.draw(st.integers(0, 10_000)))
    V = data.draw(st.integers(2, 4))
    T = data.draw(st.integers(2, 5))
    probs = random_posteriors(rng, T, V + 1)
    target = [int(rng.integers(1, V + 1))]
    perm = data.draw(st.permutations(list(range(1, V + 1))))
    # new column n holds old column new_cols[n]; targets relabel consistently
    new_cols = [0] + list(perm)
    permuted = probs[:, new_cols]
    remap = {old: new for new, old in enumerate(new_cols)}
    base = ctc_loss(np.log(probs), target).item()
    relabeled = ctc_loss(np.log(permuted), [remap[target[0]]]).item()
    assert relabeled == pytest.approx(base, abs=1e-9)


# ------------------------------------------------------------------- collapse


def test_collapse_rules():
    assert collapse([1, 1, 0, 2, 2]) == [1, 2]
    assert collapse([1, 0, 1]) == [1, 1]
    assert collapse([0, 0]) == []
    assert collapse([]) == []


# -------------------------------------------------------------------- decode


def test_best_path_decode_one_hot():
    eye = np.eye(4)
    probs = np.array([eye[1], eye[1], eye[0], eye[2]])
    assert best_path_decode(probs) == [1, 2]


def test_best_path_decode_uniform_rows_tie_break():
    probs = np.full((3, 4), 0.25)
    assert best_path_decode(probs) == []  # blank wins ties by lowest index


def test_best_path_decode_matches_hand_collapse():
    rng = np.random.default_rng(9)
    for _ in range(20):
        probs = random_posteriors(rng, 4, 4)
        assert best_path_decode(probs) == collapse(np.argmax(probs, axis=1).tolist())


def test_prefix_beam_one_hot_matches_best_path():
    rng = np.random.default_rng(10)
    for _ in range(10):
        path = rng.integers(0, 3, size=5)
        probs = np.eye(3)[path]
        assert prefix_beam_decode(probs, beam_width=5) == best_path_decode(probs)


def test_prefix_beam_saturating_matches_exhaustive():
    rng = np.random.default_rng(11)
    for _ in range(40):
        T = int(rng.integers(1, 6))
        V = int(rng.integers(1, 4))
        probs = random_posteriors(rng, T, V + 1)
        expected = exhaustive_best_labeling(probs)
        assert prefix_beam_decode(probs, beam_width=100_000) == expected


def test_prefix_beam_default_width_is_five():
    import inspect

    sig = inspect.signature(prefix_beam_decode)
    assert sig.parameters["beam_width"].default == 5


# ------------------------------------------------------------------- ensemble


def test_ensemble_identical_inputs():
    p = random_posteriors(np.random.default_rng(12), 3, 4)
    np.testing.assert_allclose(ensemble_posteriors(p, p, p), p)


def test_ensemble_rows_sum_to_one():
    rng = np.random.default_rng(13)
    a, b, c = (random_posteriors(rng, 4, 3) for _ in range(3))
    np.testing.assert_allclose(ensemble_posteriors(a, b, c).sum(axis=1), 1.0, atol=1e-12)


def test_ensemble_hand_case():
    out = ensemble_posteriors(
        np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), np.array([[0.5, 0.5]])
    )
    np.testing.assert_allclose(out, [[0.5, 0.5]])


# ----------------------------------------------------------------- posteriors


def test_posterior_file_round_trip(tmp_path):
    probs = random_posteriors(np.random.default_rng(14), 5, 6)
    path = str(tmp_path / "post.bin")
    write_posterior_file(path, FramePosteriors(probs))
    back = read_posterior_file(path)
    np.testing.assert_allclose(back.probs, probs, atol=1e-6)
    np.testing.assert_allclose(back.probs.sum(axis=1), 1.0, atol=1e-9)


def test_posterior_validation():
    with pytest.raises(ValueError):
        FramePosteriors(np.array([[0.5, 0.6]]))
