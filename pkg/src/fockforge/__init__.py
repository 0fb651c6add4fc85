"""Restricted Hartree-Fock engine with interchangeable parallel two-electron
Fock-build strategies (rank-replicated, thread-private, shared with block
buffers) and a desk-scale benchmark harness."""

__version__ = "0.1.0"

from .chem import (
    Atom,
    BasisSet,
    BasisSpec,
    Molecule,
    Primitive,
    Shell,
    assign_basis,
    build_graphene_bilayer,
    count_report,
    load_builtin_basis,
    nuclear_repulsion,
    parse_basis,
    parse_xyz,
    read_xyz,
)
from .dist import (
    CollectiveTimeout,
    DlbCounter,
    RankGroup,
    RankJobError,
    barrier,
    dlb_next,
    dlb_reset,
    global_sum,
    solo_group,
    spawn,
)
from .fock import (
    BlockBuffer,
    Schedule,
    Strategy,
    StrategyKind,
    VisitLog,
    build_fock,
    build_fock_reference,
    flush_buffer,
    tri_decode,
    tri_encode,
)
from .integrals import (
    SchwarzTable,
    boys,
    eri_quartet,
    is_screened,
    is_screened_pair,
    kinetic_block,
    kinetic_matrix,
    nuclear_block,
    nuclear_matrix,
    overlap_block,
    overlap_matrix,
    schwarz_table,
)
from .numerics import gemm, inv_sqrt, jacobi_eigh, transform
from .scf import (
    SCFConfig,
    SCFResult,
    core_hamiltonian,
    electronic_energy,
    guess_density,
    run_scf,
    scf_iterate,
)
from .bench import (
    BenchConfig,
    BenchReport,
    emit_report,
    estimate_memory,
    run_benchmark,
)
