"""Hypermap descriptors and multi-scale voting for labeling changed areas.

The package turns CNN feature stacks (pool2 / conv4_3 / fc7 activations,
read from a simple binary tensor format) into patch descriptors — either
classic per-pixel hypercolumns or region-accumulated hypermaps with
optional Gaussian center weighting — classifies them with a linear SVM,
votes across patch scales, and labels changed image areas on a sliding
grid. A seeded synthetic feature generator stands in for the CNN so the
entire pipeline is testable without pretrained weights.
"""

from .augmentation import N_VARIANTS, PatchSample, augment
from .classifier import (SvmHyperparams, SvmModel, load_model, predict,
                         predict_batch, save_model, train)
from .config import PipelineConfig, config_from_dict, load_config, save_config
from .descriptors import (DEFAULT_LAYOUT, Descriptor, GaussianParams,
                          LayoutSegment, PatchSpec, WeightGrid,
                          accumulate_channel, accumulate_channel_naive,
                          gaussian_weights, hypercolumn_descriptor,
                          hypermap_descriptor, uniform_weights)
from .errors import (DataError, HypermapsError, ModelFormatError,
                     TensorFormatError, ValidationError)
from .featuremaps import (FeatureMap, FeatureStack, Region, hflip_stack,
                          load_stack, upsample_bilinear,
                          upsample_bilinear_naive, upsampled_region)
from .masks import CLASS_NAMES, IGNORE, render_overlay
from .multiscale import (DEFAULT_SCALES, ScaleSet, VoteRecord,
                         multiscale_label, single_scale_label, tally_votes)
from .pipeline import (EvalReport, build_training_set, cross_time_run,
                       evaluate, label_change_regions, render_comparison,
                       render_report)
from .synthetic import (DatasetParams, SyntheticSpec, generate_dataset,
                        synthesize_stack)
from .tensor_store import (DatasetManifest, ManifestEntry, load_manifest,
                           read_tensor, read_tensor_array, save_manifest,
                           validate_manifest, write_tensor)

__version__ = "0.1.0"
