//! Synthetic corpus generation (in progress).
