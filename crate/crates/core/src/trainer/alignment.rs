//! Alignment phase: student → teacher and proxy → student feature matching.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{l1_loss, Adam, Tensor2D};
use crate::policy::PolicyBundle;

/// FIFO store of paired `(teacher_obs, student_obs)` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentBuffer {
    capacity: usize,
    teacher_dim: usize,
    student_dim: usize,
    teacher: VecDeque<f64>,
    student: VecDeque<f64>,
}

impl AlignmentBuffer {
    pub fn new(capacity: usize, teacher_dim: usize, student_dim: usize) -> Result<Self> {
        if capacity == 0 || teacher_dim == 0 || student_dim == 0 {
            return Err(Error::InvalidArgument(
                "alignment buffer needs positive capacity and widths".into(),
            ));
        }
        Ok(Self {
            capacity,
            teacher_dim,
            student_dim,
            teacher: VecDeque::new(),
            student: VecDeque::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.teacher.len() / self.teacher_dim
    }

    pub fn is_empty(&self) -> bool {
        self.teacher.is_empty()
    }

    /// Appends the given rows of a paired batch, evicting the oldest records beyond capacity.
    pub fn push_rows(&mut self, teacher: &Tensor2D, student: &Tensor2D, rows: &[usize]) -> Result<()> {
        teacher.check_shape("AlignmentBuffer teacher rows", (teacher.rows(), self.teacher_dim))?;
        student.check_shape("AlignmentBuffer student rows", (teacher.rows(), self.student_dim))?;
        for &r in rows {
            self.teacher.extend(teacher.row(r));
            self.student.extend(student.row(r));
        }
        let excess = self.len().saturating_sub(self.capacity);
        self.teacher.drain(..excess * self.teacher_dim);
        self.student.drain(..excess * self.student_dim);
        Ok(())
    }

    pub fn push_all(&mut self, teacher: &Tensor2D, student: &Tensor2D) -> Result<()> {
        let rows: Vec<usize> = (0..teacher.rows()).collect();
        self.push_rows(teacher, student, &rows)
    }

    /// Oldest-first copies of the stored pairs.
    pub fn tensors(&self) -> (Tensor2D, Tensor2D) {
        let n = self.len();
        let t = Tensor2D::from_vec(n, self.teacher_dim, self.teacher.iter().copied().collect()).expect("shape");
        let s = Tensor2D::from_vec(n, self.student_dim, self.student.iter().copied().collect()).expect("shape");
        (t, s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub samples: usize,
    pub iterations: usize,
    /// Student loss (feature L1 + decoder-output L1) at the first and last iteration.
    pub student_loss_first: f64,
    pub student_loss_last: f64,
    pub feature_loss_last: f64,
    pub decoder_loss_last: f64,
    pub proxy_loss_first: f64,
    pub proxy_loss_last: f64,
}

/// Student alignment loss `L1(F_S(o_s), feat_t) + L1(A(F_S(o_s)), out_t)`.
///
/// Replaces the student encoder's gradients with the gradient of this loss
/// (the decoder only propagates). Returns `(feature L1, decoder L1, F_S(o_s))`.
pub fn student_alignment_grad(
    bundle: &mut PolicyBundle,
    student_obs: &Tensor2D,
    feat_t: &Tensor2D,
    out_t: &Tensor2D,
) -> Result<(f64, f64, Tensor2D)> {
    let acts = bundle.student.forward_train(student_obs)?;
    let feat_s = acts.output().expect("forward").detached();
    let (l_feat, mut g) = l1_loss(&feat_s, feat_t)?;
    let dec = bundle.decoder.forward_train(&feat_s)?;
    let (l_dec, g_dec) = l1_loss(dec.output().expect("forward"), out_t)?;
    let g_through = bundle.decoder.backward_input(&dec, &g_dec)?;
    g.data_mut().iter_mut().zip(g_through.data()).for_each(|(a, b)| *a += b);
    bundle.student.zero_grad();
    bundle.student.backward(&acts, &g)?;
    Ok((l_feat, l_dec, feat_s))
}

/// Proxy alignment loss `L1(F̂_S(o_t), target)`; replaces the proxy encoder's gradients.
pub fn proxy_alignment_grad(bundle: &mut PolicyBundle, teacher_obs: &Tensor2D, target: &Tensor2D) -> Result<f64> {
    let acts = bundle.proxy.forward_train(teacher_obs)?;
    let (l, g) = l1_loss(acts.output().expect("forward"), target)?;
    bundle.proxy.zero_grad();
    bundle.proxy.backward(&acts, &g)?;
    Ok(l)
}

/// Runs `iters` full-batch alignment iterations over the buffer.
///
/// Per iteration the student minimizes
/// `L1(F_S(o_s), sg F_T(o_t)) + L1(A(F_S(o_s)), sg A(F_T(o_t)))`
/// with gradients reaching only the student encoder, and the proxy minimizes
/// `L1(F̂_S(o_t), sg F_S(o_s))` against the student features computed at the
/// start of the same iteration. The teacher encoder and the decoder only run forward.
pub fn alignment_phase(
    bundle: &mut PolicyBundle,
    buffer: &AlignmentBuffer,
    iters: usize,
    opt_student: &mut Adam,
    opt_proxy: &mut Adam,
) -> Result<Option<AlignmentReport>> {
    if buffer.is_empty() {
        log::warn!("alignment buffer empty; skipping alignment phase");
        return Ok(None);
    }
    let (obs_t, obs_s) = buffer.tensors();
    let feat_t = bundle.teacher.forward(&obs_t)?;
    let out_t = bundle.decoder.forward(&feat_t)?;
    let mut report = AlignmentReport {
        samples: buffer.len(),
        iterations: iters,
        ..Default::default()
    };
    for it in 0..iters {
        let (l_feat, l_dec, feat_s) = student_alignment_grad(bundle, &obs_s, &feat_t, &out_t)?;
        opt_student.step(&mut bundle.student.params_mut())?;
        let l_proxy = proxy_alignment_grad(bundle, &obs_t, &feat_s)?;
        opt_proxy.step(&mut bundle.proxy.params_mut())?;

        let student_loss = l_feat + l_dec;
        if !(student_loss.is_finite() && l_proxy.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite alignment loss at iteration {it} (student {student_loss}, proxy {l_proxy})"
            )));
        }
        if it == 0 {
            report.student_loss_first = student_loss;
            report.proxy_loss_first = l_proxy;
        }
        report.student_loss_last = student_loss;
        report.feature_loss_last = l_feat;
        report.decoder_loss_last = l_dec;
        report.proxy_loss_last = l_proxy;
    }
    Ok(Some(report))
}
