from __future__ import annotations

from app.lab.registry import ExperimentRegistry, registry
from app.lab.suites import constructions, coupling, pendulum, stability, suspension

BUNDLES = [
    pendulum,
    constructions,
    coupling,
    suspension,
    stability,
]


def register_all_bundles(target: ExperimentRegistry) -> None:
    for bundle in BUNDLES:
        target.bulk_register(bundle.build_tools())


def get_registry() -> ExperimentRegistry:
    if not registry.list_experiments():
        register_all_bundles(registry)
    return registry
