"""
Heterogeneous device topology: terminals, edge servers and cloud, with a
per-tier-pair link model.
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

TIERS = ("terminal", "edge", "cloud")


def tier_pair(a, b) -> Tuple[str, str]:
    """Unordered tier pair in canonical (TIERS) order"""
    return tuple(sorted((a, b), key=TIERS.index))


def tier_pair_key(a, b) -> str:
    return "-".join(tier_pair(a, b))


@dataclass(frozen=True)
class Device:
    id: str
    tier: str
    speed: float

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"Invalid tier {self.tier!r} for device {self.id}")
        if not self.speed > 0:
            raise ValueError(f"Device {self.id} must have speed > 0")


@dataclass(frozen=True)
class LinkParams:
    latency_s: float
    bandwidth_kbps: float

    def __post_init__(self):
        if self.latency_s < 0:
            raise ValueError("Link latency must be >= 0")
        if not self.bandwidth_kbps > 0:
            raise ValueError("Link bandwidth must be > 0")


@dataclass(frozen=True)
class Link:
    source: str
    target: str
    latency: float
    bandwidth: float

    def transfer_time(self, size_kb) -> float:
        if self.source == self.target:
            return 0.0
        return self.latency + size_kb / self.bandwidth


ZERO_COMM = LinkParams(0.0, math.inf)


class DeviceTopology:
    """Devices plus a link-parameter table total over all tier pairs"""

    def __init__(self, devices: Iterable[Device], link_params: Mapping[Tuple[str, str], LinkParams]):
        self.devices: Tuple[Device, ...] = tuple(devices)
        if not self.devices:
            raise ValueError("Topology needs at least one device")
        self._by_id: Dict[str, Device] = {}
        for device in self.devices:
            if device.id in self._by_id:
                raise ValueError(f"Duplicate device id: {device.id}")
            self._by_id[device.id] = device
        self.link_params: Dict[Tuple[str, str], LinkParams] = {
            tier_pair(*pair): params for pair, params in link_params.items()
        }
        missing = [
            tier_pair_key(a, b)
            for i, a in enumerate(TIERS)
            for b in TIERS[i:]
            if (a, b) not in self.link_params
        ]
        if missing:
            raise ValueError(f"Link table is missing tier pairs: {', '.join(missing)}")

    @classmethod
    def from_dict(cls, data) -> "DeviceTopology":
        devices = [Device(d["id"], d["tier"], float(d["speed"])) for d in data["devices"]]
        links = {}
        for key, params in data["links"].items():
            a, b = key.split("-")
            links[(a, b)] = LinkParams(float(params["latency_s"]), float(params["bandwidth_kbps"]))
        return cls(devices, links)

    def to_dict(self):
        return {
            "devices": [{"id": d.id, "tier": d.tier, "speed": d.speed} for d in self.devices],
            "links": {
                "-".join(pair): {"latency_s": p.latency_s, "bandwidth_kbps": p.bandwidth_kbps}
                for pair, p in sorted(self.link_params.items())
            },
        }

    @classmethod
    def uniform(cls, devices: Iterable[Device], latency_s=0.0, bandwidth_kbps=math.inf):
        """Topology where every tier pair shares one link setting (zero comm by default)"""
        params = LinkParams(latency_s, bandwidth_kbps)
        links = {(a, b): params for i, a in enumerate(TIERS) for b in TIERS[i:]}
        return cls(devices, links)

    def device(self, device_id) -> Device:
        return self._by_id[device_id]

    def __contains__(self, device_id):
        return device_id in self._by_id

    def link(self, source, target) -> Link:
        if source == target:
            return Link(source, target, 0.0, math.inf)
        params = self.link_params[tier_pair(self.device(source).tier, self.device(target).tier)]
        return Link(source, target, params.latency_s, params.bandwidth_kbps)

    def transfer_time(self, source, target, size_kb) -> float:
        return self.link(source, target).transfer_time(size_kb)

    def devices_for(self, tiers: Iterable[str], allowed_devices: Optional[Iterable[str]] = None) -> List[Device]:
        """Devices of the given tiers (optionally restricted to ids), sorted by id"""
        tiers = set(tiers)
        allowed = None if allowed_devices is None else set(allowed_devices)
        return sorted(
            (d for d in self.devices if d.tier in tiers and (allowed is None or d.id in allowed)),
            key=lambda d: d.id,
        )

    def terminals(self) -> List[Device]:
        return self.devices_for(["terminal"])
