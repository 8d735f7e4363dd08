"""Ground-truth scoring engine and GRPO reward harness for image
watermark evaluation."""

from .errors import (CapacityError, CorpusError, DegenerateSampleError,
                     ParameterError, ShapeError, WmevalError)
from .grpo import (GrpoConfig, GroupRollout, SyntheticPolicy, TrainResult,
                   clipped_surrogate, group_advantages, kl_to_reference,
                   grpo_step, mle_warm_start, sample_response, train)
from .imageops import (DistortionSpec, PsnrNormalization, RasterImage,
                       apply_distortion, normalize_psnr, psnr)
from .labeler import (ResidualLabel, RobustnessReport, ScoreThresholds,
                      SemanticLabel, measure_robustness,
                      residual_quality_label, residual_security_labels,
                      semantic_label)
from .latent_stats import (LatentSample, TestResult, cramer_von_mises,
                           dagostino_k2, jarque_bera, jb_statistic,
                           run_all_tests, synth_latents)
from .metrics import (MethodReport, PairedScores, accuracy, build_report,
                      plcc, srcc)
from .response_format import (FailureReason, FormatVerdict, ParsedResponse,
                              check, measure_length, parse, serialize)
from .reward import (GroundTruth, RewardBreakdown, RewardConfig,
                     breakdown_record, ground_truth_from_record,
                     ground_truth_record, length_reward,
                     residual_quality_reward, residual_security_reward,
                     semantic_reward, total_reward)
from .watermark import (EmbedConfig, WatermarkMessage, bit_accuracy, capacity,
                        embed, extract)

__version__ = "0.1.0"
