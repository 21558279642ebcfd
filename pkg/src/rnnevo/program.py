"""Flatten a genome into index arrays the sequence kernels can walk quickly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .genome import CELL_PARAM_COUNT, CELL_TYPES, INPUT, OUTPUT, Genome

# 0 marks an input node; cells are numbered from 1 in CELL_TYPES order
CELL_CODE = {name: i + 1 for i, name in enumerate(CELL_TYPES)}


@dataclass
class Program:
    kinds: np.ndarray      # int32[N] 0 = input, else CELL_CODE
    poff: np.ndarray       # int32[N] offset of node parameters in params, -1 for inputs
    in_ptr: np.ndarray     # int32[N+1] CSR row pointer over incoming edges
    in_src: np.ndarray     # int32[E] source node position
    in_skip: np.ndarray    # int32[E] 0 for feedforward, time_skip for recurrent
    in_widx: np.ndarray    # int32[E] index of the edge weight in params
    in_col: np.ndarray     # int32[N] input channel column or -1
    out_col: np.ndarray    # int32[N] output channel column or -1
    params: np.ndarray     # float64[P]
    n_in: int
    n_out: int
    edge_ids: list[int]
    node_slices: list[tuple[int, int, int]]

    @property
    def n_params(self) -> int:
        return len(self.params)


def compile_genome(genome: Genome) -> Program:
    nodes = sorted((n for n in genome.nodes.values() if n.enabled),
                   key=lambda n: (n.depth, n.id))
    pos = {n.id: i for i, n in enumerate(nodes)}
    active = sorted((e for e in genome.edges.values() if genome.is_active(e)),
                    key=lambda e: e.id)

    params = [e.weight for e in active]
    edge_ids = [e.id for e in active]
    widx = {e.id: i for i, e in enumerate(active)}
    node_slices = []
    poff = np.full(len(nodes), -1, dtype=np.int32)
    for n in sorted(nodes, key=lambda n: n.id):
        if n.kind == INPUT:
            continue
        poff[pos[n.id]] = len(params)
        node_slices.append((n.id, len(params), CELL_PARAM_COUNT[n.cell_type]))
        params.extend(n.weights)

    incoming: list[list] = [[] for _ in nodes]
    for e in active:
        incoming[pos[e.target]].append(e)
    in_ptr = np.zeros(len(nodes) + 1, dtype=np.int32)
    src, skip, wi = [], [], []
    for i, edges in enumerate(incoming):
        for e in edges:
            src.append(pos[e.source])
            skip.append(e.time_skip if e.recurrent else 0)
            wi.append(widx[e.id])
        in_ptr[i + 1] = len(src)

    in_col_of = {p: i for i, p in enumerate(genome.input_params)}
    out_col_of = {p: i for i, p in enumerate(genome.output_params)}
    kinds = np.zeros(len(nodes), dtype=np.int32)
    in_col = np.full(len(nodes), -1, dtype=np.int32)
    out_col = np.full(len(nodes), -1, dtype=np.int32)
    for i, n in enumerate(nodes):
        if n.kind == INPUT:
            in_col[i] = in_col_of[n.param_name]
        else:
            kinds[i] = CELL_CODE[n.cell_type]
            if n.kind == OUTPUT:
                out_col[i] = out_col_of[n.param_name]

    return Program(
        kinds, poff, in_ptr,
        np.asarray(src, dtype=np.int32), np.asarray(skip, dtype=np.int32),
        np.asarray(wi, dtype=np.int32), in_col, out_col,
        np.asarray(params, dtype=np.float64),
        len(genome.input_params), len(genome.output_params), edge_ids, node_slices,
    )


def write_params(genome: Genome, program: Program, params: np.ndarray) -> None:
    """Copy a flat parameter vector back onto the genome it was compiled from."""
    for i, eid in enumerate(program.edge_ids):
        genome.edges[eid].weight = float(params[i])
    for nid, off, count in program.node_slices:
        genome.nodes[nid].weights = [float(v) for v in params[off:off + count]]
