"""Composable adversarial attacks.

An attack is assembled from three goal measures (specificity, scope,
imperceptibility), an admissible set and an optimization method; see
:mod:`attackgen.taxonomy` for the spec format and presets.
"""

from .errors import (AccessDenied, AllTargetClass, AttackGenError, BudgetExhausted, CorruptFile,
                     InitFailure, InvalidDistribution, NonFiniteError, NoTargetPixels,
                     RepresentationMismatch, ShapeError, TrainingDiverged, TruncatedFile,
                     ValidationError)
from .models import Access, ModelHandle, VictimModel, load_weights, save_weights, train
from .optimizers import AttackResult
from .taxonomy import AttackSpec, TaxonomyTags, assemble, preset, transfer_evaluate, validate

__version__ = "0.1.0"
