"""SMILES and FASTA ingestion.

Parses a well-defined SMILES subset into featurized molecular graphs and
protein residue strings into fixed-length integer code vectors.

Supported SMILES dialect:
  * organic-subset atoms B, C, N, O, P, S, F, Cl, Br, I and their aromatic
    lowercase forms b, c, n, o, p, s
  * bracket atoms with optional isotope, chirality tag (@ / @@), hydrogen
    count, formal charge, and atom class (class is parsed and discarded)
  * bond symbols - = # : / \\  (directional bonds are kept as a categorical
    stereo flag on an otherwise single bond)
  * branches ( ), ring closures 1-9 and %nn, and dot-separated fragments

No kekulization, canonicalization, or 3-D handling: aromaticity is taken
from the notation itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import EmptyInput, SmilesSyntaxError, UnknownResidue

# One-hot element vocabulary: the organic subset plus a catch-all slot.
ELEMENTS = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
CHIRALITY_TAGS = ("", "@", "@@")
BOND_TYPES = ("single", "double", "triple", "aromatic")
BOND_STEREO = ("", "up", "down")

ATOM_FEATURE_WIDTH = len(ELEMENTS) + 1 + 6 + len(CHIRALITY_TAGS) + 2
BOND_FEATURE_WIDTH = len(BOND_TYPES) + 2 + len(BOND_STEREO)

# Unified atomic mass units, used as a raw node feature.
ATOMIC_MASS = {
    "H": 1.008, "He": 4.003, "Li": 6.94, "Be": 9.012, "B": 10.81, "C": 12.011,
    "N": 14.007, "O": 15.999, "F": 18.998, "Ne": 20.180, "Na": 22.990,
    "Mg": 24.305, "Al": 26.982, "Si": 28.085, "P": 30.974, "S": 32.06,
    "Cl": 35.45, "Ar": 39.948, "K": 39.098, "Ca": 40.078, "Sc": 44.956,
    "Ti": 47.867, "V": 50.942, "Cr": 51.996, "Mn": 54.938, "Fe": 55.845,
    "Co": 58.933, "Ni": 58.693, "Cu": 63.546, "Zn": 65.38, "Ga": 69.723,
    "Ge": 72.630, "As": 74.922, "Se": 78.971, "Br": 79.904, "Kr": 83.798,
    "Rb": 85.468, "Sr": 87.62, "Y": 88.906, "Zr": 91.224, "Nb": 92.906,
    "Mo": 95.95, "Ru": 101.07, "Rh": 102.906, "Pd": 106.42, "Ag": 107.868,
    "Cd": 112.414, "In": 114.818, "Sn": 118.710, "Sb": 121.760, "Te": 127.60,
    "I": 126.904, "Xe": 131.293, "Cs": 132.905, "Ba": 137.327, "W": 183.84,
    "Pt": 195.084, "Au": 196.967, "Hg": 200.592, "Pb": 207.2, "Bi": 208.980,
    "U": 238.029,
}

# Standard valence candidates for implicit-hydrogen filling.
_VALENCES = {
    "B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5),
    "S": (2, 4, 6), "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,), "H": (1,),
}

_AROMATIC_OK = {"b", "c", "n", "o", "p", "s"}
_BOND_SYMBOLS = {"-": 1, "=": 2, "#": 3, ":": 1, "/": 1, "\\": 1}


@dataclass
class AtomFeatures:
    """Per-atom features with a fixed-width vector form."""

    symbol: str
    atomic_mass: float
    valence: int
    in_ring: bool
    formal_charge: int
    radical_electrons: int
    chirality: str
    degree: int
    num_hydrogens: int
    aromatic: bool

    def vector(self) -> list[float]:
        one_hot = [0.0] * (len(ELEMENTS) + 1)
        one_hot[ELEMENTS.index(self.symbol) if self.symbol in ELEMENTS else len(ELEMENTS)] = 1.0
        chiral = [1.0 if self.chirality == tag else 0.0 for tag in CHIRALITY_TAGS]
        return (
            one_hot
            + [self.atomic_mass, float(self.valence), float(self.in_ring),
               float(self.formal_charge), float(self.radical_electrons)]
            + chiral
            + [float(self.degree), float(self.num_hydrogens)]
            + [float(self.aromatic)]
        )


@dataclass
class BondFeatures:
    """Per-bond features with a fixed-width vector form."""

    bond_type: str
    in_ring: bool
    conjugated: bool
    stereo: str

    def vector(self) -> list[float]:
        kind = [1.0 if self.bond_type == t else 0.0 for t in BOND_TYPES]
        stereo = [1.0 if self.stereo == s else 0.0 for s in BOND_STEREO]
        return kind + [float(self.in_ring), float(self.conjugated)] + stereo


@dataclass
class MolecularGraph:
    """Undirected simple graph of featurized atoms and bonds."""

    atoms: list[AtomFeatures]
    bonds: list[tuple[int, int, BondFeatures]]

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b, _ in self.bonds:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return out

    def feature_matrix(self) -> list[list[float]]:
        return [a.vector() for a in self.atoms]


@dataclass
class EncodedSequence:
    """Fixed-length integer encoding of a residue string; 0 is padding."""

    codes: list[int]
    original_length: int


# Every uppercase letter is a valid residue code: the 20 standard amino
# acids plus the B, J, O, U, X, Z ambiguity/rare symbols.
SEQUENCE_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
DEFAULT_SEQUENCE_LENGTH = 1000


def encode_fasta(residues: str, length: int = DEFAULT_SEQUENCE_LENGTH) -> EncodedSequence:
    """Encode a residue string as integer codes, truncated/padded to ``length``."""
    if not residues:
        raise EmptyInput("empty residue string")
    if length < 1:
        raise ValueError("length must be positive")
    text = residues.strip().upper()
    if not text:
        raise EmptyInput("residue string is all whitespace")
    codes = []
    for pos, ch in enumerate(text):
        idx = SEQUENCE_ALPHABET.find(ch)
        if idx < 0:
            raise UnknownResidue(f"character {ch!r} at position {pos} is not a residue code")
        codes.append(idx + 1)
    original = len(codes)
    codes = codes[:length] + [0] * max(0, length - original)
    return EncodedSequence(codes=codes, original_length=original)


def decode_codes(codes: list[int]) -> str:
    """Inverse of encode_fasta on the unpadded prefix (testing aid)."""
    out = []
    for c in codes:
        if c == 0:
            break
        out.append(SEQUENCE_ALPHABET[c - 1])
    return "".join(out)


@dataclass
class _RawAtom:
    symbol: str
    aromatic: bool
    charge: int = 0
    explicit_h: int | None = None  # None: fill implicitly (organic subset)
    isotope: int | None = None
    chirality: str = ""


@dataclass
class _RawBond:
    a: int
    b: int
    order: int  # 1..3; aromatic bonds carry order 1 with aromatic=True
    aromatic: bool
    stereo: str = ""


@dataclass
class _PendingBond:
    order: int | None = None  # None: default (single, or aromatic between aromatic atoms)
    aromatic: bool = False
    stereo: str = ""


def _parse_bracket(text: str, start: int) -> tuple[_RawAtom, int]:
    """Parse a bracket atom starting at ``text[start] == '['``; returns (atom, next index)."""
    end = text.find("]", start)
    if end < 0:
        raise SmilesSyntaxError(f"unclosed '[' at position {start}")
    body = text[start + 1:end]
    i = 0

    isotope = None
    while i < len(body) and body[i].isdigit():
        i += 1
    if i > 0:
        isotope = int(body[:i])

    if i >= len(body):
        raise SmilesSyntaxError(f"bracket atom at position {start} has no element symbol")
    aromatic = False
    if body[i].islower():
        sym = body[i:i + 2] if body[i:i + 2] in _AROMATIC_OK else body[i]
        if sym not in _AROMATIC_OK:
            raise SmilesSyntaxError(f"unknown aromatic symbol {sym!r} at position {start}")
        symbol = sym.capitalize()
        aromatic = True
        i += len(sym)
    else:
        if i + 1 < len(body) and body[i + 1].islower() and body[i:i + 2] in ATOMIC_MASS:
            symbol = body[i:i + 2]
            i += 2
        else:
            symbol = body[i]
            i += 1
        if symbol not in ATOMIC_MASS:
            raise SmilesSyntaxError(f"unknown element symbol {symbol!r} at position {start}")

    chirality = ""
    if body[i:i + 2] == "@@":
        chirality = "@@"
        i += 2
    elif body[i:i + 1] == "@":
        chirality = "@"
        i += 1

    explicit_h = 0
    if i < len(body) and body[i] == "H":
        i += 1
        h_digits = ""
        while i < len(body) and body[i].isdigit():
            h_digits += body[i]
            i += 1
        explicit_h = int(h_digits) if h_digits else 1

    charge = 0
    if i < len(body) and body[i] in "+-":
        sign = 1 if body[i] == "+" else -1
        run = 0
        while i < len(body) and body[i] == ("+" if sign > 0 else "-"):
            run += 1
            i += 1
        digits = ""
        while i < len(body) and body[i].isdigit():
            digits += body[i]
            i += 1
        if digits:
            if run > 1:
                raise SmilesSyntaxError(f"malformed charge in bracket at position {start}")
            charge = sign * int(digits)
        else:
            charge = sign * run

    if i < len(body) and body[i] == ":":
        i += 1
        if i >= len(body) or not body[i:].isdigit():
            raise SmilesSyntaxError(f"malformed atom class in bracket at position {start}")
        i = len(body)

    if i != len(body):
        raise SmilesSyntaxError(f"unexpected {body[i]!r} in bracket atom at position {start}")
    return _RawAtom(symbol, aromatic, charge, explicit_h, isotope, chirality), end + 1


def _bridges(n: int, edges: list[tuple[int, int]]) -> set[int]:
    """Indices of bridge edges (edges on no cycle), via iterative DFS."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for idx, (a, b) in enumerate(edges):
        adj[a].append((b, idx))
        adj[b].append((a, idx))
    disc = [-1] * n
    low = [0] * n
    bridges: set[int] = set()
    timer = 0
    for root in range(n):
        if disc[root] >= 0:
            continue
        stack: list[tuple[int, int, int]] = [(root, -1, 0)]
        while stack:
            node, via_edge, child_i = stack[-1]
            if child_i == 0:
                disc[node] = low[node] = timer
                timer += 1
            if child_i < len(adj[node]):
                stack[-1] = (node, via_edge, child_i + 1)
                nxt, edge_idx = adj[node][child_i]
                if edge_idx == via_edge:
                    continue
                if disc[nxt] >= 0:
                    low[node] = min(low[node], disc[nxt])
                else:
                    stack.append((nxt, edge_idx, 0))
            else:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        bridges.add(via_edge)
    return bridges


def _bond_order_for_valence(bond: _RawBond) -> float:
    return 1.5 if bond.aromatic else float(bond.order)


def _finalize(raw_atoms: list[_RawAtom], raw_bonds: list[_RawBond]) -> MolecularGraph:
    n = len(raw_atoms)
    edges = [(b.a, b.b) for b in raw_bonds]
    bridge_idx = _bridges(n, edges)
    bond_in_ring = [i not in bridge_idx for i in range(len(raw_bonds))]
    atom_in_ring = [False] * n
    for i, bond in enumerate(raw_bonds):
        if bond_in_ring[i]:
            atom_in_ring[bond.a] = atom_in_ring[bond.b] = True

    incident: list[list[_RawBond]] = [[] for _ in range(n)]
    for bond in raw_bonds:
        incident[bond.a].append(bond)
        incident[bond.b].append(bond)

    atoms: list[AtomFeatures] = []
    for i, raw in enumerate(raw_atoms):
        if raw.aromatic:
            # Lowercase atoms: count ring bonds as single plus one shared
            # double bond for the delocalized system.
            bond_sum = sum(b.order if not b.aromatic else 1 for b in incident[i]) + 1
        else:
            bond_sum = math.ceil(sum(_bond_order_for_valence(b) for b in incident[i]))

        candidates = _VALENCES.get(raw.symbol, ())
        if raw.explicit_h is None:
            fill = next((v for v in candidates if v >= bond_sum), bond_sum)
            num_h = fill - bond_sum
            radicals = 0
        else:
            num_h = raw.explicit_h
            used = bond_sum + num_h
            if raw.symbol == "B":
                adjusted = tuple(v - raw.charge for v in candidates)
            elif raw.symbol == "C":
                adjusted = tuple(v - abs(raw.charge) for v in candidates)
            else:
                adjusted = tuple(v + raw.charge for v in candidates)
            fill = next((v for v in adjusted if v >= used), used)
            radicals = fill - used

        atoms.append(AtomFeatures(
            symbol=raw.symbol,
            atomic_mass=ATOMIC_MASS[raw.symbol],
            valence=bond_sum + num_h,
            in_ring=atom_in_ring[i],
            formal_charge=raw.charge,
            radical_electrons=radicals,
            chirality=raw.chirality,
            degree=len(incident[i]),
            num_hydrogens=num_h,
            aromatic=raw.aromatic,
        ))

    def unsaturated(i: int) -> bool:
        return raw_atoms[i].aromatic or any(b.order >= 2 for b in incident[i])

    bonds: list[tuple[int, int, BondFeatures]] = []
    for idx, bond in enumerate(raw_bonds):
        if bond.aromatic:
            conj = True
        elif bond.order == 1:
            conj = unsaturated(bond.a) and unsaturated(bond.b)
        else:
            # A multiple bond is conjugated when it extends through a
            # neighboring single bond into further unsaturation.
            conj = False
            for end in (bond.a, bond.b):
                for other in incident[end]:
                    if other is bond or (other.order != 1 and not other.aromatic):
                        continue
                    far = other.b if other.a == end else other.a
                    if unsaturated(far):
                        conj = True
        kind = "aromatic" if bond.aromatic else BOND_TYPES[bond.order - 1]
        bonds.append((bond.a, bond.b, BondFeatures(
            bond_type=kind,
            in_ring=bond_in_ring[idx],
            conjugated=conj,
            stereo=bond.stereo,
        )))
    return MolecularGraph(atoms=atoms, bonds=bonds)


def parse_smiles(smiles: str) -> MolecularGraph:
    """Parse a SMILES string into a featurized molecular graph.

    Raises SmilesSyntaxError on malformed input and EmptyInput on empty
    text. Parsing is deterministic: atom order follows the notation.
    """
    if not smiles or not smiles.strip():
        raise EmptyInput("empty SMILES string")
    text = smiles.strip()

    atoms: list[_RawAtom] = []
    bonds: list[_RawBond] = []
    bonded: set[tuple[int, int]] = set()
    prev: int | None = None
    branch_stack: list[int | None] = []
    ring_open: dict[int, tuple[int, _PendingBond]] = {}
    pending = _PendingBond()
    pending_set = False

    def add_bond(a: int, b: int, spec_open: _PendingBond, spec_close: _PendingBond) -> None:
        if a == b:
            raise SmilesSyntaxError(f"ring closure makes a self-loop on atom {a}")
        key = (min(a, b), max(a, b))
        if key in bonded:
            raise SmilesSyntaxError(f"duplicate bond between atoms {a} and {b}")
        orders = {s.order for s in (spec_open, spec_close) if s.order is not None}
        aromatics = {s.aromatic for s in (spec_open, spec_close) if s.order is not None}
        if len(orders) > 1 or len(aromatics) > 1:
            raise SmilesSyntaxError(f"conflicting bond orders between atoms {a} and {b}")
        if orders:
            order, aromatic = orders.pop(), aromatics.pop()
        elif atoms[a].aromatic and atoms[b].aromatic:
            order, aromatic = 1, True
        else:
            order, aromatic = 1, False
        stereo = spec_open.stereo or spec_close.stereo
        bonded.add(key)
        bonds.append(_RawBond(a, b, order, aromatic, stereo))

    def attach(atom: _RawAtom) -> None:
        nonlocal prev, pending, pending_set
        atoms.append(atom)
        idx = len(atoms) - 1
        if prev is not None:
            add_bond(prev, idx, pending, _PendingBond())
        elif pending_set:
            raise SmilesSyntaxError("bond symbol with no preceding atom")
        prev = idx
        pending = _PendingBond()
        pending_set = False

    i = 0
    while i < len(text):
        ch = text[i]

        if ch in _BOND_SYMBOLS:
            if pending_set:
                raise SmilesSyntaxError(f"two bond symbols in a row at position {i}")
            pending = _PendingBond(
                order=_BOND_SYMBOLS[ch],
                aromatic=(ch == ":"),
                stereo={"/": "up", "\\": "down"}.get(ch, ""),
            )
            pending_set = True
            i += 1
        elif ch == "(":
            if prev is None:
                raise SmilesSyntaxError(f"branch opened before any atom at position {i}")
            if pending_set:
                raise SmilesSyntaxError(f"dangling bond before '(' at position {i}")
            branch_stack.append(prev)
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise SmilesSyntaxError(f"unbalanced ')' at position {i}")
            if pending_set:
                raise SmilesSyntaxError(f"dangling bond before ')' at position {i}")
            prev = branch_stack.pop()
            i += 1
        elif ch.isdigit() or ch == "%":
            if ch == "%":
                if i + 2 >= len(text) or not text[i + 1:i + 3].isdigit():
                    raise SmilesSyntaxError(f"malformed '%nn' ring closure at position {i}")
                number = int(text[i + 1:i + 3])
                i += 3
            else:
                number = int(ch)
                i += 1
            if prev is None:
                raise SmilesSyntaxError("ring closure digit before any atom")
            if number in ring_open:
                open_idx, open_spec = ring_open.pop(number)
                add_bond(open_idx, prev, open_spec, pending)
            else:
                ring_open[number] = (prev, pending)
            pending = _PendingBond()
            pending_set = False
        elif ch == ".":
            if pending_set:
                raise SmilesSyntaxError(f"dangling bond before '.' at position {i}")
            if branch_stack:
                raise SmilesSyntaxError(f"fragment separator inside a branch at position {i}")
            prev = None
            i += 1
        elif ch == "[":
            atom, i = _parse_bracket(text, i)
            attach(atom)
        elif ch.isupper():
            symbol = text[i:i + 2] if text[i:i + 2] in ("Cl", "Br") else ch
            if symbol not in _VALENCES:
                raise SmilesSyntaxError(
                    f"element {symbol!r} at position {i} needs bracket notation")
            attach(_RawAtom(symbol, aromatic=False))
            i += len(symbol)
        elif ch.islower():
            if ch not in _AROMATIC_OK:
                raise SmilesSyntaxError(f"unknown aromatic symbol {ch!r} at position {i}")
            attach(_RawAtom(ch.capitalize(), aromatic=True))
            i += 1
        else:
            raise SmilesSyntaxError(f"unexpected character {ch!r} at position {i}")

    if branch_stack:
        raise SmilesSyntaxError("unbalanced '(': branch never closed")
    if ring_open:
        nums = ", ".join(str(k) for k in sorted(ring_open))
        raise SmilesSyntaxError(f"unclosed ring bond number(s): {nums}")
    if pending_set:
        raise SmilesSyntaxError("dangling bond symbol at end of input")
    if not atoms:
        raise EmptyInput("SMILES contains no atoms")
    return _finalize(atoms, bonds)
