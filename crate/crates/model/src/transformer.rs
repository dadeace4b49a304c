//! Post-LN transformer encoder with a tied masked-token head.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{cst, Matrix, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncoderError {
    #[error("sequence of {len} tokens exceeds the {max} positions of the encoder")]
    TooLong { len: usize, max: usize },
    #[error("token id {id} outside a vocabulary of {size}")]
    TokenOutOfRange { id: usize, size: usize },
    #[error("segment id {id} outside a table of {size}")]
    SegmentOutOfRange { id: usize, size: usize },
    #[error("empty input sequence")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_positions: usize,
    /// Rows of the segment table.
    pub segments: usize,
}

impl EncoderConfig {
    /// 2 layers, 64 hidden units, randomly initialized; trains on a CPU.
    pub fn toy(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden: 64,
            layers: 2,
            heads: 4,
            ffn: 128,
            max_positions: 256,
            segments: 17,
        }
    }

    /// BERT-base shaped encoder.
    pub fn base(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden: 768,
            layers: 12,
            heads: 12,
            ffn: 3072,
            max_positions: 512,
            segments: 17,
        }
    }
}

#[derive(Clone, Debug)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    fn new<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        name: &str,
        inp: usize,
        out: usize,
        rng: &mut R,
    ) -> Self {
        Linear {
            w: store.add_normal(format!("{name}.w"), inp, out, 0.02, rng),
            b: store.add(format!("{name}.b"), Matrix::zeros(1, out)),
        }
    }

    fn forward<S: Scalar>(&self, tape: &mut Tape<S>, store: &ParamStore<S>, x: Var) -> Var {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

#[derive(Clone, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

impl Norm {
    fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, dim: usize) -> Self {
        Norm {
            gamma: store.add(format!("{name}.gamma"), Matrix::filled(1, dim, S::one())),
            beta: store.add(format!("{name}.beta"), Matrix::zeros(1, dim)),
        }
    }

    fn forward<S: Scalar>(&self, tape: &mut Tape<S>, store: &ParamStore<S>, x: Var) -> Var {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        tape.layer_norm(x, g, b)
    }
}

#[derive(Clone, Debug)]
struct Layer {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    attn_norm: Norm,
    up: Linear,
    down: Linear,
    ffn_norm: Norm,
}

/// Embedding tables, transformer stack and masked-token head of one encoder.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub token_table: ParamId,
    pub segment_table: ParamId,
    pub position_table: ParamId,
    embed_norm: Norm,
    layers: Vec<Layer>,
    head: Linear,
    head_norm: Norm,
    head_bias: ParamId,
}

impl Encoder {
    /// Register a freshly initialized encoder under `prefix` in `store`.
    pub fn new<S: Scalar, R: Rng>(
        config: EncoderConfig,
        prefix: &str,
        store: &mut ParamStore<S>,
        rng: &mut R,
    ) -> Self {
        assert_eq!(config.hidden % config.heads, 0, "hidden must split across heads");
        let d = config.hidden;
        let p = |n: &str| format!("{prefix}.{n}");
        let token_table = store.add_normal(p("tok"), config.vocab_size, d, 0.02, rng);
        let segment_table = store.add_normal(p("seg"), config.segments, d, 0.02, rng);
        let position_table = store.add_normal(p("pos"), config.max_positions, d, 0.02, rng);
        let embed_norm = Norm::new(store, &p("emb_norm"), d);
        let layers = (0..config.layers)
            .map(|i| {
                let l = |n: &str| format!("{prefix}.l{i}.{n}");
                Layer {
                    q: Linear::new(store, &l("q"), d, d, rng),
                    k: Linear::new(store, &l("k"), d, d, rng),
                    v: Linear::new(store, &l("v"), d, d, rng),
                    o: Linear::new(store, &l("o"), d, d, rng),
                    attn_norm: Norm::new(store, &l("attn_norm"), d),
                    up: Linear::new(store, &l("up"), d, config.ffn, rng),
                    down: Linear::new(store, &l("down"), config.ffn, d, rng),
                    ffn_norm: Norm::new(store, &l("ffn_norm"), d),
                }
            })
            .collect();
        let head = Linear::new(store, &p("head"), d, d, rng);
        let head_norm = Norm::new(store, &p("head_norm"), d);
        let head_bias = store.add(p("head_bias"), Matrix::zeros(1, config.vocab_size));
        Encoder {
            config,
            token_table,
            segment_table,
            position_table,
            embed_norm,
            layers,
            head,
            head_norm,
            head_bias,
        }
    }

    pub fn check_ids(&self, ids: &[usize], segments: &[usize]) -> Result<(), EncoderError> {
        if ids.is_empty() {
            return Err(EncoderError::Empty);
        }
        if ids.len() > self.config.max_positions {
            return Err(EncoderError::TooLong {
                len: ids.len(),
                max: self.config.max_positions,
            });
        }
        if let Some(&id) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(EncoderError::TokenOutOfRange {
                id,
                size: self.config.vocab_size,
            });
        }
        if let Some(&id) = segments.iter().find(|&&i| i >= self.config.segments) {
            return Err(EncoderError::SegmentOutOfRange {
                id,
                size: self.config.segments,
            });
        }
        Ok(())
    }

    /// Token embeddings `h_t` of `ids`, `L×d`.
    pub fn token_embeddings<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        ids: &[usize],
    ) -> Var {
        let table = tape.param(store, self.token_table);
        tape.gather_rows(table, ids)
    }

    /// `h = h_t + h_s + h_p` with positions `0..L`.
    pub fn compose<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        token_embeddings: Var,
        segments: &[usize],
    ) -> Var {
        let len = tape.shape(token_embeddings).0;
        assert_eq!(len, segments.len(), "one segment id per token");
        let seg_table = tape.param(store, self.segment_table);
        let seg = tape.gather_rows(seg_table, segments);
        let pos_table = tape.param(store, self.position_table);
        let positions: Vec<usize> = (0..len).collect();
        let pos = tape.gather_rows(pos_table, &positions);
        let h = tape.add(token_embeddings, seg);
        tape.add(h, pos)
    }

    /// Run the stack over composed input embeddings; one hidden row per position.
    pub fn encode_embeddings<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        input: Var,
    ) -> Var {
        let mut h = self.embed_norm.forward(tape, store, input);
        let d = self.config.hidden;
        let dh = d / self.config.heads;
        let scale: S = cst(1.0 / (dh as f64).sqrt());
        for layer in &self.layers {
            let q = layer.q.forward(tape, store, h);
            let k = layer.k.forward(tape, store, h);
            let v = layer.v.forward(tape, store, h);
            let heads: Vec<Var> = (0..self.config.heads)
                .map(|i| {
                    let (a, b) = (i * dh, (i + 1) * dh);
                    let qh = tape.slice_cols(q, a, b);
                    let kh = tape.slice_cols(k, a, b);
                    let vh = tape.slice_cols(v, a, b);
                    let scores = tape.matmul_nt(qh, kh);
                    let scores = tape.scale(scores, scale);
                    let attn = tape.softmax_rows(scores);
                    tape.matmul(attn, vh)
                })
                .collect();
            let joined = if heads.len() == 1 {
                heads[0]
            } else {
                tape.concat_cols(&heads)
            };
            let attn_out = layer.o.forward(tape, store, joined);
            let res = tape.add(h, attn_out);
            h = layer.attn_norm.forward(tape, store, res);
            let up = layer.up.forward(tape, store, h);
            let act = tape.gelu(up);
            let down = layer.down.forward(tape, store, act);
            let res = tape.add(h, down);
            h = layer.ffn_norm.forward(tape, store, res);
        }
        h
    }

    /// Token ids in, hidden states out.
    pub fn encode_ids<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        ids: &[usize],
        segments: &[usize],
    ) -> Result<Var, EncoderError> {
        self.check_ids(ids, segments)?;
        let tok = self.token_embeddings(tape, store, ids);
        let input = self.compose(tape, store, tok, segments);
        Ok(self.encode_embeddings(tape, store, input))
    }

    /// Vocabulary logits for `1×d` hidden rows, decoding with the token table.
    pub fn vocab_logits<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        hidden: Var,
    ) -> Var {
        let t = self.head.forward(tape, store, hidden);
        let t = tape.gelu(t);
        let t = self.head_norm.forward(tape, store, t);
        let table = tape.param(store, self.token_table);
        let logits = tape.matmul_nt(t, table);
        let bias = tape.param(store, self.head_bias);
        tape.add_row(logits, bias)
    }
}
