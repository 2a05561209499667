"""Instance file I/O - YAML storage and validation of networks"""

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import networkx as nx
import yaml
from pydantic import ValidationError

from ehdn.models.network import Network

logger = logging.getLogger(__name__)

INSTANCE_SUFFIX = ".instance.yaml"


class InstanceError(Exception):
    """Raised when an instance file violates the schema"""

    pass


class DanglingReferenceError(InstanceError):
    """Raised when an instance refers to an id that does not exist"""

    pass


class TopologyError(InstanceError):
    """Raised when the grid or hydrogen network is not radial"""

    pass


@dataclass(frozen=True)
class Violation:
    """One violated network invariant"""
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.subject}: {self.message}"


def resolve_instance(ref: Union[str, Path]) -> Path:
    """Resolve a bundled instance name or a file path

    Raises:
        InstanceError: If neither a file nor a bundled instance matches
    """
    path = Path(ref)
    if path.exists():
        return path
    from ehdn.instances import get_instance_path

    try:
        return get_instance_path(str(ref))
    except KeyError:
        raise InstanceError(f"Instance not found: {ref}")


def parse_instance(path: Union[str, Path]) -> Network:
    """Load and validate a network instance file

    Raises:
        InstanceError: Schema violation, naming the offending field
        DanglingReferenceError: An id does not resolve
        TopologyError: Grid or hydrogen network is not radial
    """
    path = resolve_instance(path)
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise InstanceError(f"Invalid YAML in {path}: {e}")

    if not isinstance(data, dict):
        raise InstanceError(f"Instance file is empty or not a mapping: {path}")
    if "version" not in data:
        raise InstanceError(f"{path}: missing mandatory field 'version'")

    try:
        net = Network.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first["loc"])
        raise InstanceError(f"{path}: invalid field '{field}': {first['msg']}")

    violations = validate_network(net)
    for code, exc in (("dangling-reference", DanglingReferenceError), ("radiality", TopologyError)):
        found = [v for v in violations if v.code == code]
        if found:
            raise exc("; ".join(str(v) for v in found))
    if violations:
        raise InstanceError("; ".join(str(v) for v in violations))

    logger.debug(
        "parsed %s: %d grid nodes, %d lines, %d hydrogen nodes, %d pipelines, T=%d",
        net.name, len(net.grid_nodes), len(net.grid_lines), len(net.h2_nodes),
        len(net.pipelines), net.periods,
    )
    return net


def save_instance(net: Network, path: Union[str, Path]) -> Path:
    """Write a network back to an instance file"""
    path = Path(path)
    data = net.model_dump(mode="json")
    with open(path, "w") as f:
        yaml.dump(data, f, default_flow_style=False, sort_keys=False)
    return path


def _duplicates(kind: str, ids: Iterable[str]) -> list[Violation]:
    counts = Counter(ids)
    return [
        Violation("duplicate-id", i, f"{kind} id appears {n} times")
        for i, n in counts.items() if n > 1
    ]


def _radiality(kind: str, nodes: list[str], edges: list[tuple[str, str, str]],
               roots: set[str]) -> list[Violation]:
    graph = nx.MultiGraph()
    graph.add_nodes_from(nodes)
    graph.add_edges_from((u, v, {"id": e}) for e, u, v in edges if u in nodes and v in nodes)
    if graph.number_of_nodes() == 0:
        return []
    out = []
    if not nx.is_forest(graph):
        cycle = nx.cycle_basis(nx.Graph(graph))
        where = ",".join(cycle[0]) if cycle else "parallel edges"
        out.append(Violation("radiality", kind, f"network contains a cycle ({where})"))
    for component in nx.connected_components(graph):
        n_roots = len(component & roots)
        if n_roots != 1:
            sample = sorted(component)[0]
            out.append(Violation(
                "radiality", kind,
                f"tree containing '{sample}' has {n_roots} roots, expected exactly 1",
            ))
    return out


def validate_network(net: Network) -> list[Violation]:
    """Check every network invariant; the report is empty iff the network is valid"""
    out: list[Violation] = []
    T = net.periods
    grid_ids = [n.id for n in net.grid_nodes]
    h2_ids = [n.id for n in net.h2_nodes]
    zone_ids = [z.id for z in net.zones]
    line_ids = [line.id for line in net.grid_lines]
    pipe_ids = [p.id for p in net.pipelines]

    out += _duplicates("grid node", grid_ids)
    out += _duplicates("hydrogen node", h2_ids)
    out += _duplicates("edge", line_ids + pipe_ids)
    out += _duplicates("station", [s.id for s in net.stations])
    out += _duplicates("zone", zone_ids)

    if not any(n.is_substation for n in net.grid_nodes):
        out.append(Violation("substation", net.name, "network has no substation node"))

    grid_set, h2_set, zone_set = set(grid_ids), set(h2_ids), set(zone_ids)

    def ref(kind: str, owner: str, target: str, pool: set[str]) -> None:
        if target not in pool:
            out.append(Violation("dangling-reference", owner, f"unknown {kind} '{target}'"))

    for line in net.grid_lines:
        ref("grid node", line.id, line.from_node, grid_set)
        ref("grid node", line.id, line.to_node, grid_set)
    for pipe in net.pipelines:
        ref("hydrogen node", pipe.id, pipe.from_node, h2_set)
        ref("hydrogen node", pipe.id, pipe.to_node, h2_set)
    for station in net.stations:
        ref("grid node", station.id, station.grid_node, grid_set)
        ref("hydrogen node", station.id, station.hydrogen_node, h2_set)
    for node in [*net.grid_nodes, *net.h2_nodes]:
        if node.zone_id is not None:
            ref("zone", node.id, node.zone_id, zone_set)

    for zone in net.zones:
        for member in zone.lines:
            ref("line", zone.id, member, set(line_ids))
        for member in zone.pipelines:
            ref("pipeline", zone.id, member, set(pipe_ids))

    # zone partition over edges
    for comp, listed in [(c, "lines") for c in net.grid_lines] + [
        (c, "pipelines") for c in net.pipelines
    ]:
        holders = {z.id for z in net.zones if comp.id in getattr(z, listed)}
        if comp.zone_id is not None:
            ref("zone", comp.id, comp.zone_id, zone_set)
            holders.add(comp.zone_id)
        if not holders:
            out.append(Violation("dangling-reference", comp.id, "component has no zone"))
        elif len(holders) > 1:
            out.append(Violation("zone-partition", comp.id,
                                 f"component belongs to zones {sorted(holders)}"))

    out += _radiality("grid", grid_ids,
                      [(e.id, e.from_node, e.to_node) for e in net.grid_lines],
                      {n.id for n in net.grid_nodes if n.is_substation})
    if net.h2_nodes:
        out += _radiality("hydrogen", h2_ids,
                          [(p.id, p.from_node, p.to_node) for p in net.pipelines],
                          {n.id for n in net.h2_nodes if n.has_transmission_feed})

    for node in [*net.grid_nodes, *net.h2_nodes]:
        if node.load_factors is not None and len(node.load_factors) != T:
            out.append(Violation("horizon", node.id, f"load_factors must have {T} entries"))
    for zone in net.zones:
        try:
            wmin, wmax = zone.wind_bounds(T)
            rmin, rmax = zone.rain_bounds(T)
        except ValueError as e:
            out.append(Violation("horizon", zone.id, str(e)))
            continue
        if (wmin > wmax).any() or (rmin > rmax).any() or (wmin < 0).any() or (rmin < 0).any():
            out.append(Violation("support", zone.id, "support bounds must satisfy 0 <= min <= max"))

    if net.weather is not None:
        if len(net.weather.ramp) != T:
            out.append(Violation("horizon", "weather", f"ramp must have {T} entries"))

    for line_id in net.fragility.lines:
        ref("line", "fragility", line_id, set(line_ids))
    for pipe_id in net.fragility.pipelines:
        ref("pipeline", "fragility", pipe_id, set(pipe_ids))

    capacity = sum(s.storage_max_m3 for s in net.stations)
    if net.costs.hydrogen_stock_m3 > capacity + 1e-9:
        out.append(Violation("storage", net.name,
                             f"hydrogen stock {net.costs.hydrogen_stock_m3} exceeds "
                             f"total storage capacity {capacity}"))
    return out

