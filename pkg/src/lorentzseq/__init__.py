"""Hyperboloid-geometry kernels for biological sequence classification.

k-mer spectra are lifted onto the forward sheet of the hyperboloid, compared
by geodesic distance, embedded with kernel PCA and classified.
"""

__version__ = "0.1.0"

from .errors import DegenerateKernel, LorentzSeqError
from .hyperboloid import (
    HyperboloidPoint,
    KernelKind,
    KernelMatrix,
    PSDMode,
    acosh_stable,
    distance,
    kernel_matrix,
    lift,
    lorentz_inner,
    psd_adjust,
)
from .io_sequences import (
    Alphabet,
    AmbiguityPolicy,
    SequenceRecord,
    parse_fasta,
    read_fasta,
    read_labels,
    validate_records,
)
from .kernel_pca import Embedding, KPCATransform, center_kernel, eigendecompose_symmetric, project
from .spectrum import compute_spectrum, kmer_index, spectrum_matrix
from .classify_eval import (
    EvalReport,
    SplitSpec,
    class_heatmap,
    evaluate,
    knn_classify,
    nearest_centroid_classify,
    stratified_split,
    t_test_summary,
)
from .pipeline import ExperimentConfig, run_experiment
