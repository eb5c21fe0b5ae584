"""Weighted communication graphs, Laplacians and the consensus projector."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import networkx as nx
import numpy as np
import sympy
from sympy.matrices.exceptions import MatrixError

from .errors import (
    AsymmetricWeightsError,
    ConsistencyError,
    EdgeListError,
    NegativeWeightError,
    TopologyError,
)

logger = logging.getLogger(__name__)

ZERO_TOL = 1e-8
SYMMETRY_TOL = 1e-12
MAX_EIGVEC_COND = 1e6
MAX_GRAPH_ATTEMPTS = 1000
MAX_JORDAN_NODES = 12


@dataclass(frozen=True)
class Network:
    """Graph weights g_iv (agent i receives from v) with spectral data."""
    N: int
    weights: np.ndarray
    directed: bool
    L: np.ndarray
    eigenvalues: np.ndarray
    phi1: np.ndarray
    psi1: np.ndarray
    lambda2_real: float
    zero_simple: bool

    @property
    def nonzero_eigenvalues(self) -> np.ndarray:
        """Eigenvalues 2..N in sorted order."""
        return self.eigenvalues[1:]

    def in_neighbors(self, i: int) -> List[int]:
        """Agents whose symbols agent i decodes."""
        return [int(v) for v in np.flatnonzero(self.weights[i] > 0)]

    def out_neighbors(self, v: int) -> List[int]:
        """Agents that decode the symbols of agent v."""
        return [int(i) for i in np.flatnonzero(self.weights[:, v] > 0)]


def _sorted_spectrum(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=complex)
    # rounded keys so conjugate pairs sort by imaginary part despite roundoff in the real part
    order = np.lexsort((np.round(values.imag, 10), np.round(values.real, 10)))
    return values[order]


def build_network(weights, directed: bool = False) -> Network:
    """Build the Laplacian L = D - G and its spectrum from a weight matrix."""
    G = np.array(weights, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] == 0:
        raise TopologyError(f"weights must be a square matrix, got shape {G.shape}")
    if np.any(G < 0):
        raise NegativeWeightError("adjacency weights must be nonnegative")
    if np.any(np.diag(G) != 0):
        raise TopologyError("adjacency weights must have a zero diagonal")
    if not directed and not np.allclose(G, G.T, rtol=0.0, atol=SYMMETRY_TOL):
        raise AsymmetricWeightsError("weights flagged undirected are not symmetric")

    N = G.shape[0]
    L = np.diag(G.sum(axis=1)) - G
    phi1 = np.full(N, 1.0 / np.sqrt(N))

    if directed:
        eigenvalues = _sorted_spectrum(np.linalg.eigvals(L))
        psi1 = _left_null_vector(L, phi1)
    else:
        eigenvalues = np.sort(np.linalg.eigvalsh(L)).astype(complex)
        psi1 = phi1.copy()

    lambda2_real = float(eigenvalues[1].real) if N > 1 else 0.0
    zero_simple = int(np.sum(np.abs(eigenvalues) < ZERO_TOL)) == 1
    for array in (G, L, eigenvalues, phi1, psi1):
        array.setflags(write=False)

    logger.info(
        f"Built {'directed' if directed else 'undirected'} network: N={N}, "
        f"edges={int(np.count_nonzero(G))}, Re(lambda2)={lambda2_real:.6f}"
    )
    return Network(
        N=N,
        weights=G,
        directed=bool(directed),
        L=L,
        eigenvalues=eigenvalues,
        phi1=phi1,
        psi1=psi1,
        lambda2_real=lambda2_real,
        zero_simple=zero_simple,
    )


def _left_null_vector(L: np.ndarray, phi1: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eig(L.T)
    index = int(np.argmin(np.abs(values)))
    psi = np.real_if_close(vectors[:, index], tol=1e6)
    psi = np.real(psi).astype(float)
    scale = psi @ phi1
    if abs(scale) < ZERO_TOL:
        # repeated zero eigenvalue; the projector is not defined
        return np.zeros_like(phi1)
    return psi / scale


def connectivity_check(net: Network) -> Dict[str, bool]:
    """Decide spanning-tree existence from reachability and from the spectrum."""
    graph = to_digraph(net)
    condensation = nx.condensation(graph)
    sources = [node for node, degree in condensation.in_degree() if degree == 0]
    graph_says = len(sources) == 1

    zero_count = int(np.sum(np.abs(net.eigenvalues) < ZERO_TOL))
    spectrum_says = zero_count == 1

    if graph_says != spectrum_says:
        raise ConsistencyError(
            f"reachability reports spanning tree={graph_says} but the Laplacian has "
            f"{zero_count} eigenvalues within {ZERO_TOL:g} of zero"
        )

    return {"has_spanning_tree": graph_says, "connected_undirected": nx.is_weakly_connected(graph)}


def to_digraph(net: Network) -> nx.DiGraph:
    """Information-flow digraph: edge v -> i whenever g_iv > 0."""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(net.N))
    receivers, senders = np.nonzero(net.weights)
    for i, v in zip(receivers, senders):
        graph.add_edge(int(v), int(i), weight=float(net.weights[i, v]))
    return graph


def _require_projector(net: Network) -> None:
    if not net.zero_simple:
        raise TopologyError(
            "the Laplacian zero eigenvalue is repeated (no spanning tree); the consensus projector is undefined"
        )


def disagreement(net: Network, x_j) -> np.ndarray:
    """Project x_j off the consensus subspace: (I - phi1 psi1^T) x_j."""
    _require_projector(net)
    x = np.asarray(x_j, dtype=float)
    return x - net.phi1 * (net.psi1 @ x)


def disagreement_matrix(net: Network, states: np.ndarray) -> np.ndarray:
    """Apply the projector to every component column of an N x 2m state array."""
    _require_projector(net)
    states = np.asarray(states, dtype=float)
    return states - np.outer(net.phi1, net.psi1 @ states)


def require_high_order_topology(net: Network) -> None:
    """Reject directed graphs that the high-order scheme does not cover."""
    if not net.directed:
        return
    eigenvalues = net.eigenvalues
    if np.max(np.abs(eigenvalues.imag)) > ZERO_TOL:
        raise TopologyError("directed Laplacian has complex eigenvalues; high-order design needs a real spectrum")
    real = eigenvalues.real
    if abs(real[0]) > ZERO_TOL or np.any(real[1:] <= ZERO_TOL):
        raise TopologyError("directed Laplacian needs a simple zero eigenvalue and positive remaining eigenvalues")
    _, vectors = np.linalg.eig(net.L)
    condition = np.linalg.cond(vectors)
    if not np.isfinite(condition) or condition >= MAX_EIGVEC_COND:
        raise TopologyError(
            f"directed Laplacian is not safely diagonalizable (eigenvector condition {condition:.3e})"
        )


def eigenvector_norms(net: Network) -> Tuple[float, float, int]:
    """Infinity norms of U_L and U_L^{-1} and the largest Jordan block size.

    Undirected graphs use the orthonormal eigenvectors. Directed graphs use
    the eigenvectors from a dense eigensolve with unit 2-norm columns when
    they are well conditioned, and otherwise an exact Jordan basis of the
    rational Laplacian, whose longest chain gives the block size.
    """
    if not net.directed:
        _, vectors = np.linalg.eigh(net.L)
        return float(np.linalg.norm(vectors, np.inf)), float(np.linalg.norm(vectors.T, np.inf)), 1
    _, vectors = np.linalg.eig(net.L)
    vectors = vectors / np.linalg.norm(vectors, axis=0)
    condition = np.linalg.cond(vectors)
    if np.isfinite(condition) and condition < MAX_EIGVEC_COND:
        inverse = np.linalg.inv(vectors)
        return float(np.linalg.norm(vectors, np.inf)), float(np.linalg.norm(inverse, np.inf)), 1
    logger.debug(f"Eigenvector condition {condition:.3e}; switching to an exact Jordan basis")
    return _jordan_norms(net)


def _jordan_norms(net: Network) -> Tuple[float, float, int]:
    if net.N > MAX_JORDAN_NODES:
        raise TopologyError(
            f"directed Laplacian is defective and N={net.N} exceeds the {MAX_JORDAN_NODES}-node "
            "limit of the exact Jordan decomposition"
        )
    entries = [sympy.Rational(str(float(value))) for value in net.L.flat]
    laplacian = sympy.Matrix(net.N, net.N, entries)
    try:
        P, J = laplacian.jordan_form()
    except (MatrixError, NotImplementedError) as exc:
        raise TopologyError(f"no exact Jordan decomposition of the directed Laplacian: {exc}") from exc

    basis = np.array(P.evalf().tolist(), dtype=complex)
    inverse = np.array(P.inv().evalf().tolist(), dtype=complex)
    longest = run = 1
    for k in range(net.N - 1):
        run = run + 1 if J[k, k + 1] != 0 else 1
        longest = max(longest, run)
    logger.info(f"Jordan basis of the directed Laplacian: largest block {longest}")
    return float(np.linalg.norm(basis, np.inf)), float(np.linalg.norm(inverse, np.inf)), longest


# Graph sources


def complete_weights(n: int) -> np.ndarray:
    """Unit weights of the complete graph K_n."""
    return nx.to_numpy_array(nx.complete_graph(n), nodelist=range(n))


def path_weights(n: int) -> np.ndarray:
    """Unit weights of the path 1-2-...-n."""
    return nx.to_numpy_array(nx.path_graph(n), nodelist=range(n))


def cycle_weights(n: int, directed: bool = False) -> np.ndarray:
    """Unit weights of the cycle; directed cycles send i -> i+1."""
    if directed:
        # to_numpy_array gives A[u, v] for edge u -> v; receivers index rows
        return nx.to_numpy_array(nx.cycle_graph(n, create_using=nx.DiGraph), nodelist=range(n)).T
    return nx.to_numpy_array(nx.cycle_graph(n), nodelist=range(n))


def parse_edge_list(text: str, nodes: Optional[int] = None, source: Optional[str] = None) -> Tuple[int, List[Tuple[int, int, float]]]:
    """Parse 'i j weight' lines (1-indexed, j receives from i)."""
    edges: List[Tuple[int, int, float]] = []
    largest = 0
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise EdgeListError(f"expected 'i j weight', got {raw.strip()!r}", line=line_number, source=source)
        try:
            i, j = int(parts[0]), int(parts[1])
            weight = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise EdgeListError(f"non-numeric edge {raw.strip()!r}", line=line_number, source=source) from None
        if i < 1 or j < 1:
            raise EdgeListError(f"node indices are 1-based, got {i} {j}", line=line_number, source=source)
        if i == j:
            raise EdgeListError(f"self loop on node {i}", line=line_number, source=source)
        edges.append((i, j, weight))
        largest = max(largest, i, j)
    count = nodes if nodes is not None else largest
    if count < largest:
        raise EdgeListError(f"edge references node {largest} but only {count} nodes declared", source=source)
    return count, edges


def weights_from_edges(nodes: int, edges: List[Tuple[int, int, float]], directed: bool) -> np.ndarray:
    """Weight matrix for 1-indexed (sender, receiver, weight) triples."""
    G = np.zeros((nodes, nodes))
    for i, j, weight in edges:
        G[j - 1, i - 1] = weight
        if not directed:
            G[i - 1, j - 1] = weight
    return G


def load_edge_list(path: Union[str, Path], directed: bool, nodes: Optional[int] = None) -> Network:
    """Read an edge-list file and build its network."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"edge list not found: {path}")
    count, edges = parse_edge_list(path.read_text(), nodes=nodes, source=str(path))
    return build_network(weights_from_edges(count, edges, directed), directed=directed)


def random_network(
    nodes: int,
    probability: float,
    directed: bool,
    rng: np.random.Generator,
    max_attempts: int = MAX_GRAPH_ATTEMPTS,
) -> Network:
    """Random 0/1-weight graph redrawn until it is connected (or has a spanning tree)."""
    for attempt in range(1, max_attempts + 1):
        seed = int(rng.integers(0, 2**31 - 1))
        graph = nx.gnp_random_graph(nodes, probability, seed=seed, directed=directed)
        G = nx.to_numpy_array(graph, nodelist=range(nodes))
        if directed:
            G = G.T
        net = build_network(G, directed=directed)
        if connectivity_check(net)["has_spanning_tree"]:
            logger.debug(f"Random graph accepted after {attempt} draw(s), graph seed {seed}")
            return net
    raise TopologyError(
        f"no {'spanning-tree digraph' if directed else 'connected graph'} with p={probability} "
        f"found in {max_attempts} draws"
    )
