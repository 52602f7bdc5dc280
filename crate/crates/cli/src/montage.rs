//! PSF montage: one block per frame, each block a `P x Q` grid of the local
//! PSFs drawn around the kernel origin and scaled to their own peak.

use tip4aw::driver::LocalPsfSet;
use tip4aw::RealImage;

const GAP: usize = 1;
const BLOCK_GAP: usize = 3;
const GAP_VALUE: f64 = 0.5;

pub fn psf_montage(psfs: &LocalPsfSet) -> RealImage {
    let (p_count, q_count) = psfs.tiles();
    let frames = psfs.frames();
    let span = psfs
        .iter()
        .flat_map(|(_, h)| h.kernel().entries().map(|((dr, dc), _)| dr.unsigned_abs().max(dc.unsigned_abs())))
        .max()
        .unwrap_or(0);
    let cell = 2 * span + 1;
    let block_rows = p_count * cell + (p_count - 1) * GAP;
    let block_cols = q_count * cell + (q_count - 1) * GAP;
    let grid_cols = (frames as f64).sqrt().ceil().max(1.0) as usize;
    let grid_rows = frames.div_ceil(grid_cols);
    let rows = grid_rows * block_rows + (grid_rows - 1) * BLOCK_GAP;
    let cols = grid_cols * block_cols + (grid_cols - 1) * BLOCK_GAP;
    let mut out = ndarray::Array2::from_elem((rows, cols), GAP_VALUE);
    for s in 0..frames {
        let (br, bc) = (s / grid_cols * (block_rows + BLOCK_GAP), s % grid_cols * (block_cols + BLOCK_GAP));
        for p in 0..p_count {
            for q in 0..q_count {
                let (r0, c0) = (br + p * (cell + GAP), bc + q * (cell + GAP));
                let kernel = psfs.get(p, q, s).kernel();
                let peak = kernel.values().iter().copied().fold(0.0, f64::max);
                for i in 0..cell {
                    for j in 0..cell {
                        let v = kernel.value_at(i as isize - span as isize, j as isize - span as isize);
                        out[[r0 + i, c0 + j]] = if peak > 0.0 { v / peak } else { 0.0 };
                    }
                }
            }
        }
    }
    RealImage::new(out).expect("montage values are finite")
}
