"""Hypothesis strategies for random expressions over a small symbol set."""
from hypothesis import strategies as st

from lieforge.expr import const, fn, jet, param, var

x, y, t = var("x"), var("y"), var("t")
a, b = param("a"), param("b")

PLAIN_ATOMS = [x, y, a, b]
JET_ATOMS = [jet("u"), jet("u", "x"), jet("u", "y"), jet("u", "x", "y"), jet("u", "t")]
KERNEL_ATOMS = [fn("lam", t), fn("gam", x - y, t), fn("lam", x * y)]

small = st.fractions(min_value=-5, max_value=5, max_denominator=4)


def exprs(atoms=PLAIN_ATOMS, max_leaves=8, rational=True):
    leaf = st.one_of(st.sampled_from(atoms), small.map(const))

    def extend(children):
        ops = [st.tuples(children, children).map(lambda p: p[0] + p[1]),
               st.tuples(children, children).map(lambda p: p[0] - p[1]),
               st.tuples(children, children).map(lambda p: p[0] * p[1])]
        if rational:
            # denominators of the form e^2 + 1 never vanish on real points
            ops.append(st.tuples(children, children).map(lambda p: p[0] / (p[1] * p[1] + 1)))
        return st.one_of(*ops)

    return st.recursive(leaf, extend, max_leaves=max_leaves)


def jet_polys(max_leaves=6):
    """Polynomials in jets up to order 2 with plain coefficients."""
    return exprs(PLAIN_ATOMS[:2] + JET_ATOMS, max_leaves=max_leaves, rational=False)


def kernel_exprs(max_leaves=6):
    return exprs([x, y, t, a] + KERNEL_ATOMS, max_leaves=max_leaves, rational=False)


points = st.fixed_dictionaries({
    "x": st.floats(-2, 2), "y": st.floats(-2, 2), "t": st.floats(0.5, 2),
    "a": st.floats(-2, 2), "b": st.floats(-2, 2),
})
