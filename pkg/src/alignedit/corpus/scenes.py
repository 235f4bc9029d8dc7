"""Procedural scenes, their rasterizer, and the finite edit space.

Scenes live on a 4x4 grid of 8x8-pixel cells inside a 32x32 RGB image.
Each scene holds at most one shape per kind, every shape color differs from
the background, and rasterization is exactly invertible, which is what lets
a brute-force classifier label any rendered pair with its true edit.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

GRID = 4
CELL = 8
IMG = GRID * CELL
N_COLORS = 8
MAX_SHAPES = 3

COLOR_NAMES = ["black", "white", "red", "green", "blue", "yellow", "purple", "orange"]
PALETTE = np.array([
    [0.0, 0.0, 0.0],
    [1.0, 1.0, 1.0],
    [1.0, 0.0, 0.0],
    [0.0, 0.75, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
    [0.5, 0.0, 1.0],
    [1.0, 0.5, 0.0],
], dtype=np.float32)

KINDS = ["square", "circle", "triangle"]

RECOLOR_SHAPE = "recolor-shape"
RECOLOR_BACKGROUND = "recolor-background"
ADD_SHAPE = "add-shape"
REMOVE_SHAPE = "remove-shape"
CHANGE_KIND = "change-shape-kind"
EDIT_KINDS = [RECOLOR_SHAPE, RECOLOR_BACKGROUND, ADD_SHAPE, REMOVE_SHAPE, CHANGE_KIND]


def _circle_mask():
    r, c = np.mgrid[0:CELL, 0:CELL]
    return ((r - 3.5) ** 2 + (c - 3.5) ** 2) <= 9.0


def _square_mask():
    m = np.zeros((CELL, CELL), dtype=bool)
    m[1:7, 1:7] = True
    return m


def _triangle_mask():
    m = np.zeros((CELL, CELL), dtype=bool)
    widths = {1: (3, 5), 2: (3, 5), 3: (2, 6), 4: (2, 6), 5: (1, 7), 6: (1, 7)}
    for row, (lo, hi) in widths.items():
        m[row, lo:hi] = True
    return m


SHAPE_MASKS = {"square": _square_mask(), "circle": _circle_mask(), "triangle": _triangle_mask()}


@dataclass(frozen=True, order=True)
class Shape:
    kind: str
    color: int
    cell: int  # 0..15, row-major on the 4x4 grid


@dataclass(frozen=True)
class SceneSpec:
    background: int
    shapes: tuple  # of Shape, at most one per kind

    def __post_init__(self):
        if not 0 <= self.background < N_COLORS:
            raise ValueError(f"bad background color id {self.background}")
        if len(self.shapes) > MAX_SHAPES:
            raise ValueError("too many shapes")
        kinds = [s.kind for s in self.shapes]
        cells = [s.cell for s in self.shapes]
        if len(set(kinds)) != len(kinds):
            raise ValueError("duplicate shape kind")
        if len(set(cells)) != len(cells):
            raise ValueError("shapes overlap on a cell")
        for s in self.shapes:
            if s.kind not in SHAPE_MASKS:
                raise ValueError(f"unknown shape kind {s.kind!r}")
            if not 0 <= s.cell < GRID * GRID:
                raise ValueError(f"bad cell {s.cell}")
            if s.color == self.background:
                raise ValueError("shape color equals background")

    def kind_map(self):
        return {s.kind: s for s in self.shapes}

    def free_cells(self):
        used = {s.cell for s in self.shapes}
        return [c for c in range(GRID * GRID) if c not in used]

    def sorted_shapes(self):
        return tuple(sorted(self.shapes))


@dataclass(frozen=True)
class EditSpec:
    op: str
    kind: str = None
    color: int = None
    new_kind: str = None
    cell: int = None


def render(scene):
    """Deterministic rasterization, no anti-aliasing, palette colors only."""
    img = np.empty((IMG, IMG, 3), dtype=np.float32)
    img[:] = PALETTE[scene.background]
    for s in scene.shapes:
        row, col = divmod(s.cell, GRID)
        block = img[row * CELL:(row + 1) * CELL, col * CELL:(col + 1) * CELL]
        block[SHAPE_MASKS[s.kind]] = PALETTE[s.color]
    return img


def _palette_id(pixel):
    hits = np.where((PALETTE == pixel).all(axis=1))[0]
    if len(hits) != 1:
        raise ValueError(f"pixel {pixel} not in palette")
    return int(hits[0])


def scene_from_image(img):
    """Exact inverse of render (only valid on rendered images)."""
    bg = _palette_id(img[0, 0])
    shapes = []
    for cell in range(GRID * GRID):
        row, col = divmod(cell, GRID)
        block = img[row * CELL:(row + 1) * CELL, col * CELL:(col + 1) * CELL]
        mask = ~(block == PALETTE[bg]).all(axis=-1)
        if not mask.any():
            continue
        kind = next((k for k, m in SHAPE_MASKS.items() if np.array_equal(mask, m)), None)
        if kind is None:
            raise ValueError(f"cell {cell} does not match any shape mask")
        filled = block[mask]
        if not (filled == filled[0]).all():
            raise ValueError(f"cell {cell} holds multiple colors")
        shapes.append(Shape(kind, _palette_id(filled[0]), cell))
    return SceneSpec(bg, tuple(shapes))


def apply_edit(scene, edit):
    shapes = scene.kind_map()
    if edit.op == RECOLOR_SHAPE:
        target = shapes[edit.kind]
        new = replace(target, color=edit.color)
        return SceneSpec(scene.background,
                         tuple(new if s.kind == edit.kind else s for s in scene.shapes))
    if edit.op == RECOLOR_BACKGROUND:
        return SceneSpec(edit.color, scene.shapes)
    if edit.op == ADD_SHAPE:
        if edit.cell not in scene.free_cells():
            raise ValueError("add-shape: cell occupied")
        return SceneSpec(scene.background, scene.shapes + (Shape(edit.kind, edit.color, edit.cell),))
    if edit.op == REMOVE_SHAPE:
        if edit.kind not in shapes:
            raise ValueError("remove-shape: kind absent")
        return SceneSpec(scene.background,
                         tuple(s for s in scene.shapes if s.kind != edit.kind))
    if edit.op == CHANGE_KIND:
        target = shapes[edit.kind]
        new = Shape(edit.new_kind, target.color, target.cell)
        return SceneSpec(scene.background,
                         tuple(new if s.kind == edit.kind else s for s in scene.shapes))
    raise ValueError(f"unknown edit op {edit.op!r}")


def enumerate_edits(scene, ops=None):
    """All valid single edits of a scene."""
    shapes = scene.kind_map()
    absent = [k for k in KINDS if k not in shapes]
    edits = []
    for op in (ops or EDIT_KINDS):
        if op == RECOLOR_SHAPE:
            for s in scene.shapes:
                for color in range(N_COLORS):
                    if color not in (s.color, scene.background):
                        edits.append(EditSpec(RECOLOR_SHAPE, kind=s.kind, color=color))
        elif op == RECOLOR_BACKGROUND:
            used = {s.color for s in scene.shapes}
            for color in range(N_COLORS):
                if color != scene.background and color not in used:
                    edits.append(EditSpec(RECOLOR_BACKGROUND, color=color))
        elif op == ADD_SHAPE:
            for kind in absent:
                for color in range(N_COLORS):
                    if color == scene.background:
                        continue
                    for cell in scene.free_cells():
                        edits.append(EditSpec(ADD_SHAPE, kind=kind, color=color, cell=cell))
        elif op == REMOVE_SHAPE:
            for s in scene.shapes:
                edits.append(EditSpec(REMOVE_SHAPE, kind=s.kind))
        elif op == CHANGE_KIND:
            for s in scene.shapes:
                for kind in absent:
                    edits.append(EditSpec(CHANGE_KIND, kind=s.kind, new_kind=kind))
    return edits


def edit_between(scene_a, scene_b):
    """The single edit turning scene_a into scene_b, or None."""
    a, b = scene_a.kind_map(), scene_b.kind_map()
    if scene_a.background != scene_b.background:
        if scene_a.shapes == scene_b.shapes:
            return EditSpec(RECOLOR_BACKGROUND, color=scene_b.background)
        return None
    gone = [k for k in a if k not in b]
    new = [k for k in b if k not in a]
    if not gone and not new:
        changed = [k for k in a if a[k] != b[k]]
        if len(changed) != 1:
            return None
        k = changed[0]
        if a[k].cell == b[k].cell and a[k].color != b[k].color:
            return EditSpec(RECOLOR_SHAPE, kind=k, color=b[k].color)
        return None
    if not gone and len(new) == 1 and all(a[k] == b[k] for k in a):
        s = b[new[0]]
        return EditSpec(ADD_SHAPE, kind=s.kind, color=s.color, cell=s.cell)
    if not new and len(gone) == 1 and all(a[k] == b[k] for k in b):
        return EditSpec(REMOVE_SHAPE, kind=gone[0])
    if len(gone) == 1 and len(new) == 1 and all(a[k] == b[k] for k in a if k in b):
        old_s, new_s = a[gone[0]], b[new[0]]
        if old_s.cell == new_s.cell and old_s.color == new_s.color:
            return EditSpec(CHANGE_KIND, kind=gone[0], new_kind=new[0])
    return None


def canonical_instruction(edit):
    """The single text rendering of an edit (cell placement is not spoken)."""
    if edit.op == RECOLOR_SHAPE:
        return f"make the {edit.kind} {COLOR_NAMES[edit.color]}"
    if edit.op == RECOLOR_BACKGROUND:
        return f"make the background {COLOR_NAMES[edit.color]}"
    if edit.op == ADD_SHAPE:
        return f"add a {COLOR_NAMES[edit.color]} {edit.kind}"
    if edit.op == REMOVE_SHAPE:
        return f"remove the {edit.kind}"
    if edit.op == CHANGE_KIND:
        return f"turn the {edit.kind} into a {edit.new_kind}"
    raise ValueError(f"unknown edit op {edit.op!r}")


def edited_cells(scene_a, scene_b):
    """Grid cells allowed to differ for the edit between two scenes."""
    edit = edit_between(scene_a, scene_b)
    if edit is None:
        return set(range(GRID * GRID))
    if edit.op == RECOLOR_BACKGROUND:
        return set(range(GRID * GRID))
    cells = set()
    for scene in (scene_a, scene_b):
        for s in scene.shapes:
            if s.kind in (edit.kind, edit.new_kind):
                cells.add(s.cell)
    if edit.op == ADD_SHAPE:
        cells.add(edit.cell)
    return cells
