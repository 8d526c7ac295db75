import math
from typing import Optional

# Named s/t projector sequences on spin_0(4). Items are written in tuple order (P_k, ..., P_1),
# so the last item acts first; "caps" adds the all-ancilla singlet projector at both ends.
NAMED_SEQUENCES = {
    "six_ancilla": {
        "n_comp": 4,
        "n_anc": 6,
        "items": [["t", "a6", "c1"], ["s", "a2", "a6"], ["t", "a6", "c2"], ["s", "a4", "a6"], ["t", "a6", "c4"]],
        "caps": True,
        "description": "No-leakage sequence whose operator is a rotation by an irrational angle",
    },
    "four_ancilla_order12": {
        "n_comp": 4,
        "n_anc": 4,
        "items": [["t", "a3", "c3"], ["t", "a2", "c2"], ["s", "a2", "c3"], ["t", "a3", "c2"], ["s", "a3", "c4"]],
        "caps": True,
        "description": "No-leakage sequence whose operator has order 12",
    },
    "relaxed_two_ancilla": {
        "n_comp": 4,
        "n_anc": 2,
        "items": [["t", "a2", "c2"], ["t", "a2", "c1"], ["t", "a2", "c4"]],
        "caps": True,
        "description": "Unitary overall although the middle projector leaks",
    },
    "O1": {
        "n_comp": 4,
        "n_anc": 2,
        "items": [["t", "a2", "c2"], ["t", "c1", "c2"], ["t", "a1", "c1"], ["t", "a1", "c4"],
                  ["t", "c3", "c4"], ["t", "c2", "c3"], ["t", "c1", "c2"], ["t", "a1", "c1"]],
        "caps": True,
        "description": "Length-8 triplet sequence, first operator of the commutator pair",
    },
    "O2": {
        "n_comp": 4,
        "n_anc": 2,
        "items": [["t", "a2", "c2"], ["t", "c1", "c2"], ["t", "c1", "c3"], ["t", "a1", "c3"],
                  ["t", "a1", "a2"], ["t", "a2", "c2"], ["t", "c1", "c2"], ["t", "a1", "c1"]],
        "caps": True,
        "description": "Length-8 triplet sequence, second operator of the commutator pair",
    },
    "singlet_swap_c1_c2": {
        "n_comp": 4,
        "n_anc": 2,
        "items": [["s", "a1", "c2"], ["s", "a1", "c1"]],
        "caps": True,
        "description": "Three singlet teleports (the last one is the trailing cap) exchanging c1 and c2",
    },
}

# Reference det-1 matrices of the two triplet-sequence operators
PRINTED_OPERATORS = {
    "O1": [
        [math.sqrt(15) / (2 * math.sqrt(7)), 1 / (2 * math.sqrt(35))],
        [-math.sqrt(5) / (2 * math.sqrt(7)), 9 * math.sqrt(3) / (2 * math.sqrt(35))],
    ],
    "O2": [
        [0.7, -math.sqrt(3) / 10],
        [-1 / (2 * math.sqrt(3)), 1.5],
    ],
}

# Eigenvalues of the irrational-rotation operators
ROTATION_EIGENVALUES = (
    complex(3 * math.sqrt(3), 1) / (2 * math.sqrt(7)),
    complex(3 * math.sqrt(3), -1) / (2 * math.sqrt(7)),
)


def get_sequence_record(name: str) -> Optional[dict]:
    """
    Returns the stored record of a named sequence
    """
    return NAMED_SEQUENCES.get(name)


def get_printed_operator(name: str) -> Optional[list]:
    """
    Returns the reference matrix for O1 or O2
    """
    return PRINTED_OPERATORS.get(name)
