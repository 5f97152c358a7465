"""Foreground/background surveillance video codec.

Static scenery is carried by a handful of coded background templates with
linear interpolation between them; moving content is cut into grid-aligned
regions and coded by block motion plus transformed residuals, all wrapped
in an indexed container built for random access.
"""

from .bgmodel import (GmmParams, GmmState, SeparationResult, background_estimate,
                      gmm_init, gmm_update, load_state, save_state)
from .bgtemplate import (BackgroundTemplate, TemplateChain, decode_template,
                         encode_template, interpolate_backgrounds,
                         interpolated_background, should_update)
from .container import (ContainerError, FbvStream, ForegroundRecord,
                        RetrievalPlan, StreamHeader, TemplateRecord,
                        build_segments, budget_of, lookup, read_stream,
                        write_stream)
from .core import (FbvError, Frame, Region, VideoFormatError, VideoSequence,
                   frame_from_planes, read_y4m, to_luma, write_y4m)
from .decode import CompositeFrame, composite, enhance
from .entropy import (BitBudgetReport, ContextModel, EntropyDecodeError,
                      RangeDecoder, RangeEncoder, bit_cost)
from .fgregion import (FgParams, RegionSet, combine_masks, combine_regions,
                       extract_foreground, fp)
from .metrics import (QualityReport, bpp, fb_mixture, laplacian_sharpness,
                      ms_ssim, psnr, rd_objective)
from .motion import (FlowField, decode_flow, encode_flow, estimate_flow,
                     predict, warp)
from .pipeline import (QUALITY_LADDER, AnalyzeReport, DecodeResult,
                       EncodeResult, EncoderConfig, RdPoint, TimingReport,
                       analyze_bytes, decode_bytes, decode_frame, decode_stream,
                       encode, rd_sweep, sweep_csv)
from .quantizer import CenterSet, quantize_hard, quantize_soft
from .residual import (QualityPoint, decode_residual, encode_residual,
                       reconstruct_foreground)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
