"""Thin-film SPP dataset generation and cascade network training (C++ core)."""

from ._sppnet import (
    CascadeNet,
    Dataset,
    DomainError,
    Error,
    SolverError,
    ThinFilmSolution,
    Wavevector,
    compute_Mm,
    dominant_peak_width,
    drude_permittivity,
    evaluate,
    gaussian_window,
    generate_grid,
    load_dataset,
    load_model,
    molybdenum,
    observe,
    save_model,
    single_interface_beta,
    split,
    thin_film_beta,
    train,
    windowed_fft,
)

__all__ = [
    "CascadeNet",
    "Dataset",
    "DomainError",
    "Error",
    "SolverError",
    "ThinFilmSolution",
    "Wavevector",
    "compute_Mm",
    "dominant_peak_width",
    "drude_permittivity",
    "evaluate",
    "gaussian_window",
    "generate_grid",
    "load_dataset",
    "load_model",
    "molybdenum",
    "observe",
    "save_model",
    "single_interface_beta",
    "split",
    "thin_film_beta",
    "train",
    "windowed_fft",
]
