import pytest
from hypothesis import given
from hypothesis import strategies as st

from subcrit_cp.groups import FreeProductGroup, ZdGroup, group_from_spec

Z2 = ZdGroup(2)
TREE = FreeProductGroup((2, 2, 2))
MIXED = FreeProductGroup((0, 3))  # Z * Z_3


def zd_elements(dim):
    return st.tuples(*[st.integers(-50, 50)] * dim)


def words(group, max_len=6):
    letters = st.tuples(st.integers(0, len(group.orders) - 1), st.integers(-3, 3))
    return st.lists(letters, max_size=max_len).map(group.parse)


class TestZd:
    def test_identity_and_inverse(self):
        assert Z2.identity == (0, 0)
        assert Z2.mul((1, 2), Z2.inv((1, 2))) == (0, 0)

    @given(zd_elements(2), zd_elements(2), zd_elements(2))
    def test_axioms(self, x, y, z):
        assert Z2.mul(Z2.mul(x, y), z) == Z2.mul(x, Z2.mul(y, z))
        assert Z2.mul(Z2.identity, x) == x
        assert Z2.inv(Z2.mul(x, y)) == Z2.mul(Z2.inv(y), Z2.inv(x))

    def test_parse_and_format(self):
        Z1 = ZdGroup(1)
        assert Z1.parse(3) == (3,)
        assert Z1.parse("-2") == (-2,)
        assert Z2.parse([1, -1]) == (1, -1)
        assert Z2.format((1, -1)) == "(1,-1)"
        with pytest.raises(ValueError):
            Z2.parse(3)

    def test_config_is_sorted_and_unique(self):
        assert ZdGroup(1).config([(3,), (1,), (3,)]) == ((1,), (3,))

    def test_ball_size(self):
        assert len(ZdGroup(1).ball(3)) == 7
        assert len(Z2.ball(2)) == 13


class TestFreeProduct:
    @given(words(TREE), words(TREE), words(TREE))
    def test_axioms_tree(self, x, y, z):
        assert TREE.mul(TREE.mul(x, y), z) == TREE.mul(x, TREE.mul(y, z))
        assert TREE.mul(x, TREE.inv(x)) == TREE.identity
        assert TREE.inv(TREE.mul(x, y)) == TREE.mul(TREE.inv(y), TREE.inv(x))

    @given(words(MIXED), words(MIXED))
    def test_words_stay_reduced(self, x, y):
        w = MIXED.mul(x, y)
        assert all(a[0] != b[0] for a, b in zip(w, w[1:]))
        assert all(e != 0 for _, e in w)

    def test_parse_format_roundtrip(self):
        g = FreeProductGroup((0, 0))
        x = g.parse("ab^-1")
        assert g.format(x) == "ab^-1"
        assert g.format(g.inv(g.parse("ab"))) == "b^-1a^-1"
        assert g.format(g.identity) == "1"

    def test_cyclic_factor_reduces(self):
        g = FreeProductGroup((3,))
        a = g.parse("a")
        assert g.mul(a, g.mul(a, a)) == g.identity

    def test_shortlex_order(self):
        g = FreeProductGroup((0, 0))
        elems = sorted([g.parse("ab"), g.parse("b"), g.identity, g.parse("a")], key=g.key)
        assert elems[0] == g.identity
        assert [g.word_length(x) for x in elems] == [0, 1, 1, 2]

    def test_tree_ball_is_regular(self):
        # 3-regular tree: 1 + 3 + 6 elements within distance 2
        assert len(TREE.ball(2)) == 10


def test_group_from_spec():
    assert group_from_spec({"model": "zd", "dim": 3}) == ZdGroup(3)
    assert group_from_spec({"model": "free_product", "orders": [2, 2]}) == FreeProductGroup((2, 2))
    with pytest.raises(ValueError):
        group_from_spec({"model": "heisenberg"})
