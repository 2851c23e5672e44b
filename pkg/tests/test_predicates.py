import numpy as np
import pytest

from logiclearn import autodiff as ad
from logiclearn import predicates as pr


def blocks_world_groups():
    # objects u, v, w, floor = 0..3; facts On(u,v), On(v,floor), On(w,floor),
    # Top(u), Top(w)
    n = 4
    on = np.zeros((n, n))
    on[0, 1] = on[1, 3] = on[2, 3] = 1.0
    top = np.array([1.0, 0.0, 1.0, 0.0])
    return pr.input_groups({"Top": top, "On": on}, n), on, top


def test_expand_constant_rows():
    groups, _, top = blocks_world_groups()
    expanded = pr.expand(groups[1])
    assert expanded.arity == 2
    assert expanded.names == ["Top_ex"]
    mat = expanded.node.value[..., 0]
    assert mat.shape == (4, 4)
    for x in range(4):
        assert np.array_equal(mat[x], np.full(4, top[x]))


def test_expand_nullary_gives_constant_vector():
    g = pr.group_from_arrays([("Flag", np.array(0.6))], 3, 0)
    expanded = pr.expand(g)
    assert expanded.arity == 1
    assert np.array_equal(expanded.node.value[..., 0], [0.6, 0.6, 0.6])


def test_reduce_forall_of_expand_round_trip():
    rng = np.random.default_rng(0)
    g = pr.group_from_arrays([("P", rng.random((5, 5)))], 5, 2)
    back = pr.reduce_both(pr.expand(g))
    # forall block comes first and must equal the source bit-exactly
    assert np.array_equal(back.node.value[..., 0], g.node.value[..., 0])
    assert np.array_equal(back.node.value[..., 1], g.node.value[..., 0])


def test_reduce_both_worked_example():
    groups, on, _ = blocks_world_groups()
    red = pr.reduce_both(groups[2])
    assert red.names == ["On_all", "On_any"]
    # OnR2(X) = exists Y On(X, Y) holds exactly for u, v, w
    assert np.array_equal(red.node.value[..., 1], [1.0, 1.0, 1.0, 0.0])
    assert np.array_equal(red.node.value[..., 0], np.zeros(4))


def test_reduce_all_ones_and_single_object():
    ones = pr.group_from_arrays([("P", np.ones((3, 3)))], 3, 2)
    red = pr.reduce_both(ones)
    assert np.array_equal(red.node.value[..., 0], np.ones(3))
    single = pr.group_from_arrays([("P", np.array([[0.4]]))], 1, 2)
    red1 = pr.reduce_both(single)
    assert np.array_equal(red1.node.value[..., 0], red1.node.value[..., 1])


def test_all_permutations_unary_is_identity():
    groups, _, _ = blocks_world_groups()
    out = pr.all_permutations(groups[1])
    assert out is groups[1]


def test_all_permutations_binary():
    groups, on, _ = blocks_world_groups()
    out = pr.all_permutations(groups[2])
    assert out.names == ["On", "On_perm10"]
    assert np.array_equal(out.node.value[..., 0], on)
    assert np.array_equal(out.node.value[..., 1], on.T)


def test_all_permutations_ternary_count():
    rng = np.random.default_rng(1)
    g = pr.group_from_arrays([("Q", rng.random((3, 3, 3)))], 3, 3)
    out = pr.all_permutations(g)
    assert out.count == 6
    # sigma = (1, 2, 0): C[i,j,k] = Q[i_sigma(0), i_sigma(1), i_sigma(2)] = Q[j,k,i]
    sig_idx = pr.sigmas_for(3).index((1, 2, 0))
    got = out.node.value[..., sig_idx]
    src = g.node.value[..., 0]
    for i in range(3):
        for j in range(3):
            for k in range(3):
                assert got[i, j, k] == src[j, k, i]


def test_build_candidates_blocks_world_breadth1():
    groups, _, _ = blocks_world_groups()
    cs = pr.build_candidates(groups, 1, 3)
    assert cs.names == ["Top", "On_all", "On_any"]
    assert cs.negated_names == ["~Top", "~On_all", "~On_any"]


def test_build_candidates_blocks_world_breadth2():
    groups, on, top = blocks_world_groups()
    cs = pr.build_candidates(groups, 2, 3)
    assert set(cs.names) == {"On", "On_perm10", "Top_ex", "Top_ex_perm10"}
    assert cs.names == ["On", "On_perm10", "Top_ex", "Top_ex_perm10"]
    mat = cs.materialize().node.value
    assert np.array_equal(mat[..., 0], on)
    assert np.array_equal(mat[..., 1], on.T)
    assert np.array_equal(mat[..., 2], np.tile(top[:, None], (1, 4)))
    assert np.array_equal(mat[..., 3], np.tile(top[None, :], (4, 1)))


def test_build_candidates_no_reduced_at_max_breadth():
    groups, _, _ = blocks_world_groups()
    cs = pr.build_candidates(groups, 2, 2)
    assert all("_all" not in nm and "_any" not in nm for nm in cs.names)


def test_candidate_ordering_is_deterministic():
    groups, _, _ = blocks_world_groups()
    a = pr.build_candidates(groups, 2, 3)
    b = pr.build_candidates(groups, 2, 3)
    assert a.names == b.names
    assert [m for m in a.layout.metas] == [m for m in b.layout.metas]


def test_candidate_count_formula():
    rng = np.random.default_rng(2)
    n = 3
    groups = pr.input_groups({
        "A": rng.random(n), "B": rng.random(n),
        "C": rng.random((n, n)),
        "D": rng.random((n, n, n)), "E": rng.random((n, n, n)),
    }, n)
    b = 2
    cs = pr.build_candidates(groups, b, 3)
    c_direct, c_exp, c_red = 1, 2, 2
    assert cs.layout.k == 2 * (c_direct + c_exp + 2 * c_red)
    assert len(cs.names) == cs.layout.k


def test_negated_candidates_are_exact_complements():
    groups, _, _ = blocks_world_groups()
    cs = pr.build_candidates(groups, 2, 3)
    mat = cs.materialize().node
    neg = ad.affine_neg(mat)
    assert np.array_equal(neg.value, 1.0 - mat.value)


def test_boolean_reductions_match_brute_force():
    rng = np.random.default_rng(3)
    for n in range(1, 6):
        arr = (rng.random((n, n, n)) < 0.5).astype(float)
        g = pr.group_from_arrays([("P", arr)], n, 3)
        red = pr.reduce_both(g)
        for i in range(n):
            for j in range(n):
                assert red.node.value[i, j, 0] == float(all(arr[i, j, k] for k in range(n)))
                assert red.node.value[i, j, 1] == float(any(arr[i, j, k] for k in range(n)))


def test_batched_groups_match_unbatched():
    rng = np.random.default_rng(4)
    n = 4
    ons = [rng.random((n, n)) for _ in range(3)]
    tops = [rng.random(n) for _ in range(3)]
    batched = pr.input_groups({"Top": np.stack(tops), "On": np.stack(ons)}, n, batched=True)
    cs_b = pr.build_candidates(batched, 1, 2)
    for k, (on, top) in enumerate(zip(ons, tops)):
        single = pr.input_groups({"Top": top, "On": on}, n)
        cs_s = pr.build_candidates(single, 1, 2)
        assert cs_s.names == cs_b.names
        assert np.allclose(cs_b.base.value[k], cs_s.base.value)


def test_breadth_out_of_range_errors():
    groups, _, _ = blocks_world_groups()
    with pytest.raises(ValueError, match="breadth"):
        pr.build_candidates(groups, 4, 3)
    with pytest.raises(ValueError, match="breadth"):
        pr.build_candidates(groups, -1, 3)
