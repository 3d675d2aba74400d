from dataclasses import dataclass

from abcdkit.data.datamodel import BELIEF, ExperimentDataset
from abcdkit.estimate.iv import (
    F_THRESHOLD,
    AnchoringEffect,
    GateVerdict,
    anchoring_effect,
    weak_instrument_gate,
)
from abcdkit.estimate.linreg import stars


@dataclass(frozen=True)
class ManipulationCheck:
    belief: str
    effect: AnchoringEffect
    verdict: GateVerdict
    threshold: float = F_THRESHOLD
    unit: str = ""

    @property
    def text(self) -> str:
        unit = f" {self.unit}" if self.unit else ""
        if self.verdict:
            outcome = f"passes the F > {self.threshold:g} criterion"
        else:
            outcome = f"does not pass the F > {self.threshold:g} criterion"
        return (
            f"{self.belief}: anchoring effect {self.effect.effect:.4g}{unit}"
            f"{stars(self.effect.p)} (se {self.effect.se:.3g}, p = {self.effect.p:.3g}), "
            f"F = {self.effect.f:.2f}; {outcome}"
        )

    def to_dict(self) -> dict:
        return {
            "belief": self.belief,
            **self.effect.to_dict(),
            "threshold": self.threshold,
            "verdict": self.verdict.value,
            "text": self.text,
        }


def manipulation_check(
    ds: ExperimentDataset, belief: str = BELIEF, threshold: float = F_THRESHOLD, unit: str = ""
) -> ManipulationCheck:
    """Did the anchors move ``belief``? Anchoring effect plus the weak-instrument gate."""
    effect = anchoring_effect(ds, belief)
    return ManipulationCheck(
        belief=belief,
        effect=effect,
        verdict=weak_instrument_gate(effect.f, threshold),
        threshold=threshold,
        unit=unit,
    )
