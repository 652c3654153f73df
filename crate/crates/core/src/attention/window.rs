//! Non-overlapping M×M window attention with a learned relative position
//! bias, relaxed over the M² keys of each window.

use crate::attention::mha::{mha_with_gamma, AttnCall, HeadInputs, MhaParams};
use crate::attention::relax::check_dropout;
use crate::autograd::{concat_rows, Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::rng::RngStream;
use crate::tensor::Tensor;

fn check_divisible(h: usize, w: usize, m: usize) -> Result<()> {
    if m == 0 || h % m != 0 || w % m != 0 {
        return Err(Error::Shape {
            op: "window_partition",
            left: vec![h, w],
            right: vec![m, m],
        });
    }
    Ok(())
}

/// For window `wi` (row-major over the window grid) and slot `s` (row-major
/// inside the window), entry `wi·m² + s` holds the flat position `y·w + x`.
pub fn window_positions(h: usize, w: usize, m: usize) -> Result<Vec<usize>> {
    check_divisible(h, w, m)?;
    let mut out = Vec::with_capacity(h * w);
    for wy in 0..h / m {
        for wx in 0..w / m {
            for sy in 0..m {
                for sx in 0..m {
                    out.push((wy * m + sy) * w + wx * m + sx);
                }
            }
        }
    }
    Ok(out)
}

/// `[h, w, c]` → `[h·w/m², m², c]`.
pub fn window_partition(x: &Tensor, m: usize) -> Result<Tensor> {
    let [h, w, c] = *x.shape() else {
        return Err(invalid("window_partition expects an h×w×c tensor"));
    };
    let pos = window_positions(h, w, m)?;
    let mut data = Vec::with_capacity(x.len());
    for p in pos {
        data.extend_from_slice(&x.data()[p * c..(p + 1) * c]);
    }
    Tensor::new(vec![h * w / (m * m), m * m, c], data)
}

/// Inverse of [`window_partition`].
pub fn window_merge(windows: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let [n, mm, c] = *windows.shape() else {
        return Err(invalid("window_merge expects a windows×m²×c tensor"));
    };
    let m = (mm as f64).sqrt().round() as usize;
    if m * m != mm || n * mm != h * w {
        return Err(Error::Shape {
            op: "window_merge",
            left: windows.shape().to_vec(),
            right: vec![h, w],
        });
    }
    let pos = window_positions(h, w, m)?;
    let mut data = vec![0.0; h * w * c];
    for (src, p) in pos.into_iter().enumerate() {
        data[p * c..(p + 1) * c].copy_from_slice(&windows.data()[src * c..(src + 1) * c]);
    }
    Tensor::new(vec![h, w, c], data)
}

/// Window attention parameters: an [`MhaParams`] with scale `1/√(c/4)` and
/// a `(2M−1)² × N_h` relative position bias table.
#[derive(Clone, Debug)]
pub struct WindowAttnParams {
    pub mha: MhaParams,
    pub bias_table: ParamId,
    pub m: usize,
}

impl WindowAttnParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        c: usize,
        heads: usize,
        m: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if m == 0 {
            return Err(invalid("window side must be positive"));
        }
        let mut mha = MhaParams::init(store, prefix, c, heads, rng)?;
        mha.scale = 1.0 / (c as f64 / 4.0).sqrt();
        let side = 2 * m - 1;
        let n = side * side * heads;
        let table = Tensor::new(
            vec![side * side, heads],
            (0..n).map(|_| 0.02 * rng.standard_normal()).collect(),
        )?;
        let bias_table = store.add(format!("{prefix}.rel_bias"), table);
        Ok(Self { mha, bias_table, m })
    }

    /// Flat table index for query slot `i`, key slot `j`, head `head`.
    pub fn bias_index(&self, i: usize, j: usize, head: usize) -> usize {
        let m = self.m;
        let side = 2 * m - 1;
        let (yi, xi) = (i / m, i % m);
        let (yj, xj) = (j / m, j % m);
        let dy = yi + m - 1 - yj;
        let dx = xi + m - 1 - xj;
        (dy * side + dx) * self.mha.heads + head
    }

    /// Dense `R_pos` for one head, M² × M².
    pub fn bias_matrix(&self, store: &ParamStore, head: usize) -> Tensor {
        let mm = self.m * self.m;
        let table = store.get(self.bias_table);
        let data = (0..mm * mm)
            .map(|k| table.data()[self.bias_index(k / mm, k % mm, head)])
            .collect();
        Tensor::from_parts(vec![mm, mm], data)
    }
}

/// Window MHA over a feature map given as an `(h·w) × c` matrix in row-major
/// spatial order. Returns the same layout.
#[allow(clippy::too_many_arguments)]
pub fn windowed_mha<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    x: Var<'t>,
    h: usize,
    w: usize,
    params: &WindowAttnParams,
    call: &AttnCall,
    rng: &mut RngStream,
) -> Result<Var<'t>> {
    let c = params.mha.d;
    let shape = x.shape();
    if shape != [h * w, c] {
        return Err(Error::Shape {
            op: "windowed_mha",
            left: shape,
            right: vec![h * w, c],
        });
    }
    check_dropout(call.dropout_p)?;
    call.relax.validate()?;
    let m = params.m;
    let mm = m * m;
    let pos = window_positions(h, w, m)?;
    let gamma = call.relax.gamma_for(call.phase, rng);

    let table = tape.param(store, params.bias_table);
    let biases = (0..params.mha.heads)
        .map(|head| {
            let idx = (0..mm * mm)
                .map(|k| params.bias_index(k / mm, k % mm, head))
                .collect();
            table.gather(idx, vec![mm, mm])
        })
        .collect::<Result<Vec<_>>>()?;

    let mut outs = Vec::with_capacity(pos.len() / mm);
    for win in pos.chunks(mm) {
        let xw = x.gather_rows(win)?;
        let inputs = HeadInputs {
            q: xw,
            k: xw,
            v: xw,
            mask: None,
            bias: Some(&biases),
        };
        outs.push(mha_with_gamma(tape, store, &params.mha, &inputs, gamma, call, rng)?.out);
    }

    let stacked = concat_rows(&outs)?;
    let mut inverse = vec![0; pos.len()];
    for (src, &p) in pos.iter().enumerate() {
        inverse[p] = src;
    }
    stacked.gather_rows(&inverse)
}
