"""Regenerate the bundled scenario files under src/pertqec/scenarios/."""

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "pertqec" / "scenarios"

I = [[1, 0], [0, 1]]
X = [[0, 1], [1, 0]]
Y = [[0, [0, -1]], [[0, 1], 0]]
Z = [[1, 0], [0, -1]]
LOWER = [[0, 1], [0, 0]]  # |0><1|


def basis_vector(bits: str):
    v = [0.0] * 2 ** len(bits)
    v[int(bits, 2)] = 1.0
    return v


def superpose(*bits):
    n = len(bits[0])
    v = np.zeros(2 ** n)
    for b in bits:
        v[int(b, 2)] = 1.0
    return (v / np.linalg.norm(v)).tolist()


REP3 = {"basis": [basis_vector("000"), basis_vector("111")]}
GRID = {"start": 1e-3, "stop": 1e-1, "points": 12, "scale": "log"}


def scale(m, s):
    out = []
    for row in m:
        out.append([[s * e[0], s * e[1]] if isinstance(e, list) else s * e for e in row])
    return out


SCENARIOS = {
    "a_repetition_bitflip": {
        "description": "three-qubit repetition code under independent bit-flip Lindblad noise",
        "system_dims": [2, 2, 2],
        "code": REP3,
        "noise": {"type": "lindblad",
                  "lindblad_ops": [{"site": k, "matrix": X} for k in range(3)]},
        "expect": {"kl_passed": True, "slope_min": 2.5},
    },
    "b_repetition_dephasing": {
        "description": "three-qubit repetition code under independent dephasing Lindblad noise",
        "system_dims": [2, 2, 2],
        "code": REP3,
        "noise": {"type": "lindblad",
                  "lindblad_ops": [{"site": k, "matrix": Z} for k in range(3)]},
        "expect": {"kl_passed": False, "slope_min": 1.8, "slope_max": 2.2},
    },
    "c1_amplitude_damping_qubit": {
        "description": "amplitude damping on one qubit with the whole qubit as the code",
        "system_dims": [2],
        "code": {"basis": [basis_vector("0"), basis_vector("1")]},
        "noise": {"type": "amplitude_damping", "n_qubits": 1},
        "expect": {"kl_passed": False, "slope_min": 1.8, "slope_max": 2.2},
    },
    "c4_amplitude_damping_four_qubit": {
        "description": "amplitude damping on four qubits, code spanned by "
                       "(|0000>+|1111>)/sqrt2 and (|0011>+|1100>)/sqrt2",
        "system_dims": [2, 2, 2, 2],
        "code": {"basis": [superpose("0000", "1111"), superpose("0011", "1100")]},
        "noise": {"type": "amplitude_damping", "n_qubits": 4},
        "expect": {"kl_passed": True, "slope_min": 2.5},
    },
    "d_interaction_normal": {
        "description": "per-qubit coupling X(x)X + Y(x)(0.5X + 0.3Z) to an environment qubit in |0>; "
                       "first-order error i(X + 0.5Y) is normal; repetition code on three qubits",
        "system_dims": [2, 2, 2],
        "code": REP3,
        "noise": {"type": "parallel", "copies": 3,
                  "inner": {"type": "interaction", "lambda": 1.0,
                            "terms": [{"J": X, "K": X},
                                      {"J": Y, "K": [[0.3, 0.5], [0.5, -0.3]]}],
                            "env_state": [1, 0]}},
        "expect": {"kl_passed": True, "slope_min": 2.5},
    },
    "e_interaction_non_normal": {
        "description": "per-qubit coupling X(x)X + Y(x)Y to an environment qubit in |0>; "
                       "first-order error i(X + iY) is not normal; repetition code on three qubits",
        "system_dims": [2, 2, 2],
        "code": REP3,
        "noise": {"type": "parallel", "copies": 3,
                  "inner": {"type": "interaction", "lambda": 1.0,
                            "terms": [{"J": X, "K": X}, {"J": Y, "K": Y}],
                            "env_state": [1, 0]}},
        "expect": {"kl_passed": False, "slope_min": 1.8, "slope_max": 2.2},
    },
    "f_identity": {
        "description": "noiseless channel on one qubit; scaling fits saturate",
        "system_dims": [2],
        "code": {"basis": [basis_vector("0"), basis_vector("1")]},
        "noise": {"type": "kraus_series", "ops": [[I, [[0, 0], [0, 0]]]]},
        "expect": {"kl_passed": True, "saturated": True},
    },
}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, body in SCENARIOS.items():
        doc = {"name": name, **body, "eps_grid": GRID, "seed": 1234, "samples": 10, "bounds_eps": 0.1}
        (OUT / f"{name}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        print(OUT / f"{name}.json")


if __name__ == "__main__":
    main()
