from hypothesis import strategies as st
from hypothesis.strategies import composite

from ccqm.constants import DEFAULT_GENERATORS
from ccqm.graphs import FareyGraph, Slope, tree_multiply
from ccqm.moebius import GroupWord, reduce

GENERATOR_IDS = DEFAULT_GENERATORS.ids


@composite
def words(draw, max_length=6, ids=GENERATOR_IDS):
    letters = draw(
        st.lists(
            st.tuples(st.sampled_from(ids), st.sampled_from((1, -1))),
            max_size=max_length,
        )
    )
    return reduce(GroupWord(tuple(letters)))


@composite
def tree_vertices(draw, radius=4, rank=2):
    vertex = ()
    for _ in range(draw(st.integers(min_value=0, max_value=radius))):
        choices = [
            letter
            for index in range(1, rank + 1)
            for letter in (index, -index)
            if not vertex or letter != -vertex[-1]
        ]
        vertex = vertex + (draw(st.sampled_from(choices)),)
    return vertex


@composite
def tree_segments(draw, lengths=(2, 3)):
    """Vertices of a reduced path starting at the identity."""
    labels: tuple = ()
    for _ in range(draw(st.sampled_from(lengths))):
        choices = [
            letter for letter in (1, -1, 2, -2) if not labels or letter != -labels[-1]
        ]
        labels = labels + (draw(st.sampled_from(choices)),)
    vertices = [()]
    for label in labels:
        vertices.append(tree_multiply(vertices[-1], (label,)))
    return tuple(vertices)


@composite
def farey_vertices(draw, bound=4):
    return draw(st.sampled_from(list(FareyGraph(bound).vertices())))


FAREY_SEGMENTS = (
    (Slope(-1, 1), Slope(0, 1), Slope(1, 1)),
    (Slope(1, 0), Slope(0, 1), Slope(1, 1)),
    (Slope(1, 0), Slope(0, 1), Slope(1, 2), Slope(1, 3)),
    (Slope(0, 1), Slope(1, 2), Slope(1, 1), Slope(1, 0)),
)
