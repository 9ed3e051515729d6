"""Communication-behavior analytics for egocentric wearable audio features.

The package turns frame-wise acoustic feature recordings (MFCC 1-12 plus
log-pitch, intensity, and an HF/LF energy ratio) into communication measures:
a distilled foreground/background/silence frame classifier, diarization
scoring, speaking-session features, personalized vocal-arousal scores, and
the cohort statistics used to compare them across shifts and work units.
"""

from .behavior import BehaviorFeatures, Session, segment_sessions, shift_features
from .dermetrics import DiarizationScore, aggregate, score
from .errors import CommtraceError
from .model import StudentConfig, StudentModel, forward, init_model
from .records import Cohort, Participant, Recording, Shift, filter_compliant
from .stats import mean_ci, pearson, three_way_anova
from .training import TrainConfig, backward, distill_loss, infer_labels, train

__version__ = "0.1.0"

__all__ = [
    "BehaviorFeatures", "Cohort", "CommtraceError", "DiarizationScore",
    "Participant", "Recording", "Session", "Shift", "StudentConfig",
    "StudentModel", "TrainConfig", "aggregate", "backward", "distill_loss",
    "filter_compliant", "forward", "infer_labels", "mean_ci", "pearson",
    "score", "segment_sessions", "shift_features", "three_way_anova", "train",
]
