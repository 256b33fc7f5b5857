"""Hand-built MDPs with known greedy policies, shared by the policy tests."""
import numpy as np

from soptools.policy import MdpSpec


def one_state():
    # two actions paying 1 and 0; the state never changes
    return MdpSpec(np.ones((1, 2, 1)), np.array([[1.0, 0.0]]), 0.9)


def two_state_swap():
    k = np.zeros((2, 2, 2))
    for s in range(2):
        k[s, 0, s] = 1.0          # stay
        k[s, 1, 1 - s] = 1.0      # swap
    r = np.array([[0.0, 0.5], [1.0, 0.0]]) - 0.5
    return MdpSpec(k, r, 0.9)


def three_state_ergodic():
    k = np.full((3, 3, 3), 0.5 / 3)
    for s in range(3):
        for a in range(3):
            k[s, a, (s + a) % 3] += 0.5
    r = np.array([[0.0, 1.0, 0.2], [0.5, 0.0, 1.0], [1.0, 0.3, 0.0]]) - 0.5
    return MdpSpec(k, r, 0.9)


HAND_MDPS = {"one-state": one_state, "two-state-swap": two_state_swap, "three-state": three_state_ergodic}

# a random 2x2 MDP (Dirichlet kernel, uniform(-1, 1) rewards) on which seed 4 ends greedy-wrong in state 1
COUNTEREXAMPLE_KERNEL = [
    [[0.932862210144049, 0.06713778985595087], [0.9991757348173538, 0.0008242651826462537]],
    [[0.5225059288660582, 0.4774940711339419], [0.2953995957575329, 0.7046004042424672]],
]
COUNTEREXAMPLE_REWARDS = [[0.6305125559900913, -0.9714576206307788], [0.25692389573258145, 0.5860473161960682]]


def counterexample():
    return MdpSpec(np.array(COUNTEREXAMPLE_KERNEL), np.array(COUNTEREXAMPLE_REWARDS), 0.9)
