//! The full predictor: three encoders (graph prompt, sentence context, schema
//! template), the fusion gates, and candidate scoring at the mask.

use cgep_core::ecg::{CandidateEvent, CgepInstance, Event};
use cgep_core::linearize::{linearize, GraphPromptTemplate, LinearizeError, SegmentRole, TripleOrder};
use cgep_core::tokenize::Tokenizer;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eece::{fuse_rows, Ablation, FusionParams};
use crate::params::ParamStore;
use crate::scep::{contrastive_loss_tape, LossConfig};
use crate::tape::{Tape, Var};
use crate::tensor::{Matrix, Scalar};
use crate::transformer::{Encoder, EncoderConfig, EncoderError};
use crate::vocab::Vocab;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("event `{0}`: mention not found among the sentence tokens")]
    MentionUnresolvable(String),
    #[error("candidate `{0}` has no in-vocabulary token")]
    OutOfVocabulary(String),
    #[error("candidate mention is empty")]
    EmptyMention,
    #[error("instance `{0}`: gold is not among the candidates")]
    MissingGold(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateContext {
    /// Encode the candidate inside its (padded) sentence.
    #[default]
    Sentence,
    /// Encode the bare mention.
    Mention,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Token budget of the graph template.
    pub max_tokens: usize,
    pub ablation: Ablation,
    #[serde(default)]
    pub candidate_context: CandidateContext,
}

/// One sentence ready for the context encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSentence {
    pub ids: Vec<usize>,
    /// Positions of the mention's tokens in `ids`.
    pub mention: Vec<usize>,
}

/// Everything about an instance that does not depend on the weights.
#[derive(Clone, Debug)]
pub struct PreparedInstance {
    pub instance_id: String,
    pub template: GraphPromptTemplate,
    pub ids: Vec<usize>,
    pub segments: Vec<usize>,
    pub schema_ids: Vec<usize>,
    pub schema_segments: Vec<usize>,
    /// Token positions of every occurrence in the schema template.
    pub schema_occurrences: Vec<Vec<usize>>,
    /// Context sentence for every distinct event in the template.
    pub events: Vec<PreparedSentence>,
    /// Index into `events` for every template occurrence.
    pub occurrence_event: Vec<usize>,
    pub candidates: Vec<CandidateEvent>,
    pub candidate_tokens: Vec<Vec<usize>>,
    pub gold: usize,
}

pub struct ForwardOutput {
    /// Hidden states of the graph encoder, `L×d`.
    pub hidden: Var,
    /// Mask representation `z_m`, `1×d`.
    pub z_m: Var,
    /// Candidate scores (mean sub-token log-probability), `1×K`.
    pub scores: Var,
}

pub struct LossOutput {
    pub total: Var,
    pub prediction: Var,
    pub contrastive: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct SedgplModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub graph_encoder: Encoder,
    pub context_encoder: Encoder,
    pub schema_encoder: Encoder,
    pub fusion: FusionParams,
}

/// Segment ids: `[CLS]` and the first triple share id 0, triple `i` gets
/// `min(i, rows − 2)`, and the prompt owns the last row.
pub fn segment_ids(template: &GraphPromptTemplate, rows: usize) -> Vec<usize> {
    let prompt = rows - 1;
    template
        .layout
        .iter()
        .map(|slot| match slot.segment {
            SegmentRole::Begin => 0,
            SegmentRole::Triple(i) => i.min(rows.saturating_sub(2)),
            SegmentRole::Prompt => prompt,
        })
        .collect()
}

fn wrap(vocab: &Vocab, body: Vec<usize>) -> Vec<usize> {
    let mut ids = Vec::with_capacity(body.len() + 2);
    ids.push(vocab.cls_id());
    ids.extend(body);
    ids.push(vocab.sep_id());
    ids
}

impl SedgplModel {
    pub fn new<S: Scalar, R: Rng>(
        config: ModelConfig,
        vocab: Vocab,
        store: &mut ParamStore<S>,
        rng: &mut R,
    ) -> Self {
        assert_eq!(config.encoder.vocab_size, vocab.len(), "vocabulary size");
        let graph_encoder = Encoder::new(config.encoder.clone(), "ecg", store, rng);
        let context_encoder = Encoder::new(config.encoder.clone(), "ctx", store, rng);
        let schema_encoder = Encoder::new(config.encoder.clone(), "sch", store, rng);
        let fusion = FusionParams::new(store, "fuse", config.encoder.hidden, rng);
        SedgplModel {
            config,
            vocab,
            graph_encoder,
            context_encoder,
            schema_encoder,
            fusion,
        }
    }

    fn sentence_limit(&self) -> usize {
        self.config.encoder.max_positions - 2
    }

    /// Tokenize `event.sentence` and locate the mention by character span.
    pub fn prepare_event(&self, event: &Event) -> Result<PreparedSentence, ModelError> {
        let pieces = self.vocab.tokenize(&event.sentence);
        let span = event.mention_span;
        let mut mention: Vec<usize> = pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| p.span.overlaps(&span))
            .map(|(i, _)| i)
            .collect();
        let limit = self.sentence_limit();
        let offset = if pieces.len() > limit {
            // keep a window that contains the mention
            let last = *mention.last().unwrap_or(&0);
            (last + 1).saturating_sub(limit)
        } else {
            0
        };
        let end = (offset + limit).min(pieces.len());
        mention.retain(|&i| i >= offset && i < end);
        if mention.is_empty() {
            return Err(ModelError::MentionUnresolvable(event.event_id.clone()));
        }
        let body = pieces[offset..end]
            .iter()
            .map(|p| self.vocab.id(&p.text))
            .collect();
        Ok(PreparedSentence {
            ids: wrap(&self.vocab, body),
            mention: mention.iter().map(|i| i - offset + 1).collect(),
        })
    }

    /// Candidate input for `z_c`: its sentence when the mention can be found
    /// there, else the bare mention.
    pub fn prepare_candidate(&self, candidate: &CandidateEvent) -> Result<PreparedSentence, ModelError> {
        let mention = self.vocab.pieces(&candidate.mention);
        if mention.is_empty() {
            return Err(ModelError::EmptyMention);
        }
        let bare = || PreparedSentence {
            ids: wrap(&self.vocab, self.vocab.ids(&mention)),
            mention: (1..=mention.len()).collect(),
        };
        if self.config.candidate_context == CandidateContext::Mention {
            return Ok(bare());
        }
        let mut pieces = self.vocab.pieces(&candidate.sentence);
        pieces.truncate(self.sentence_limit());
        let found = pieces
            .windows(mention.len())
            .position(|w| w == mention.as_slice());
        Ok(match found {
            Some(start) => PreparedSentence {
                ids: wrap(&self.vocab, self.vocab.ids(&pieces)),
                mention: (start + 1..start + 1 + mention.len()).collect(),
            },
            None => bare(),
        })
    }

    pub fn candidate_tokens(&self, candidate: &CandidateEvent) -> Result<Vec<usize>, ModelError> {
        let ids = self.vocab.encode(&candidate.mention);
        if ids.is_empty() {
            return Err(ModelError::EmptyMention);
        }
        let unk = self.vocab.unk_id();
        if ids.iter().all(|&i| i == unk) {
            return Err(ModelError::OutOfVocabulary(candidate.mention.clone()));
        }
        Ok(ids)
    }

    pub fn prepare(&self, instance: &CgepInstance) -> Result<PreparedInstance, ModelError> {
        let order = if self.config.ablation.no_dist {
            TripleOrder::Shuffled(instance.sampling_seed)
        } else {
            TripleOrder::Distance
        };
        let lin = linearize(
            &instance.graph,
            &instance.anchor_id,
            order,
            Some(self.config.max_tokens.min(self.config.encoder.max_positions)),
            &self.vocab,
        )?;
        let rows = self.config.encoder.segments;
        let mut event_ids: Vec<&str> = Vec::new();
        let mut occurrence_event = Vec::new();
        for occ in &lin.mention.occurrences {
            let idx = match event_ids.iter().position(|e| *e == occ.event_id) {
                Some(i) => i,
                None => {
                    event_ids.push(&occ.event_id);
                    event_ids.len() - 1
                }
            };
            occurrence_event.push(idx);
        }
        let events = event_ids
            .iter()
            .map(|id| self.prepare_event(instance.graph.node(id).expect("template event")))
            .collect::<Result<Vec<_>, _>>()?;
        let candidate_tokens = instance
            .candidates
            .iter()
            .map(|c| self.candidate_tokens(c))
            .collect::<Result<Vec<_>, _>>()?;
        let gold = instance
            .gold_index()
            .ok_or_else(|| ModelError::MissingGold(instance.instance_id.clone()))?;
        let schema = lin.schema;
        let template = lin.mention;
        let schema_ids = self.vocab.ids(&schema.tokens);
        let ids = self.vocab.ids(&template.tokens);
        self.graph_encoder.check_ids(&ids, &[])?;
        self.schema_encoder.check_ids(&schema_ids, &[])?;
        Ok(PreparedInstance {
            instance_id: instance.instance_id.clone(),
            segments: segment_ids(&template, rows),
            schema_segments: segment_ids(&schema, rows),
            schema_occurrences: schema.occurrences.iter().map(|o| o.positions.clone()).collect(),
            ids,
            schema_ids,
            template,
            events,
            occurrence_event,
            candidates: instance.candidates.clone(),
            candidate_tokens,
            gold,
        })
    }

    /// Fused token embeddings of the graph template (`L×d`).
    pub fn fused_embeddings<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        prep: &PreparedInstance,
    ) -> Result<Var, ModelError> {
        let tokens = self
            .graph_encoder
            .token_embeddings(tape, store, &prep.ids);
        let ablation = self.config.ablation;
        if !ablation.fuses() {
            return Ok(tokens);
        }
        let occurrences = &prep.template.occurrences;
        let h_c = if ablation.no_ctxt {
            None
        } else {
            let mut per_event = Vec::with_capacity(prep.events.len());
            for ev in &prep.events {
                let zeros = vec![0; ev.ids.len()];
                let hidden = self
                    .context_encoder
                    .encode_ids(tape, store, &ev.ids, &zeros)?;
                per_event.push(tape.mean_rows(hidden, &ev.mention));
            }
            let rows: Vec<Var> = prep.occurrence_event.iter().map(|&e| per_event[e]).collect();
            Some(tape.concat_rows(&rows))
        };
        let h_s = if ablation.no_schm {
            None
        } else {
            let hidden = self.schema_encoder.encode_ids(
                tape,
                store,
                &prep.schema_ids,
                &prep.schema_segments,
            )?;
            let rows: Vec<Var> = prep
                .schema_occurrences
                .iter()
                .map(|positions| tape.mean_rows(hidden, positions))
                .collect();
            Some(tape.concat_rows(&rows))
        };
        let h_r = match (h_c, h_s) {
            (Some(c), Some(s)) => {
                let w = tape.param(store, self.fusion.w_r);
                let u = tape.param(store, self.fusion.u_r);
                fuse_rows(tape, c, s, w, u)
            }
            (Some(c), None) => c,
            (None, Some(s)) => s,
            (None, None) => unreachable!("fusion disabled above"),
        };
        let mut positions = Vec::new();
        let mut owner = Vec::new();
        for (k, occ) in occurrences.iter().enumerate() {
            for &p in &occ.positions {
                positions.push(p);
                owner.push(k);
            }
        }
        let h_g = tape.gather_rows(tokens, &positions);
        let h_r = tape.gather_rows(h_r, &owner);
        let w = tape.param(store, self.fusion.w_e);
        let u = tape.param(store, self.fusion.u_e);
        let fused = fuse_rows(tape, h_g, h_r, w, u);
        Ok(tape.overwrite_rows(tokens, fused, &positions))
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        prep: &PreparedInstance,
    ) -> Result<ForwardOutput, ModelError> {
        let tokens = self.fused_embeddings(tape, store, prep)?;
        let input = self
            .graph_encoder
            .compose(tape, store, tokens, &prep.segments);
        let hidden = self.graph_encoder.encode_embeddings(tape, store, input);
        let m = prep.template.mask_position;
        let z_m = tape.slice_rows(hidden, m, m + 1);
        let logits = self.graph_encoder.vocab_logits(tape, store, z_m);
        let log_probs = tape.log_softmax_rows(logits);
        let scores = tape.group_mean_cols(log_probs, &prep.candidate_tokens);
        Ok(ForwardOutput {
            hidden,
            z_m,
            scores,
        })
    }

    /// `L_p`, plus `β·L_c` when contrast is enabled. `z_c` holds one constant
    /// candidate representation per row together with the positive's row.
    pub fn loss<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        out: &ForwardOutput,
        gold: usize,
        z_c: Option<(Matrix<S>, usize)>,
        config: &LossConfig,
    ) -> LossOutput {
        let prediction = tape.cross_entropy(out.scores, gold);
        let contrastive = match z_c {
            Some((z, positive)) if !self.config.ablation.no_ctrst => {
                let zc = tape.constant(z);
                Some(contrastive_loss_tape(tape, out.z_m, zc, positive, config))
            }
            _ => None,
        };
        let total = match contrastive {
            Some(c) => {
                let weighted = tape.scale(c, crate::tensor::cst(config.beta));
                tape.add(prediction, weighted)
            }
            None => prediction,
        };
        LossOutput {
            total,
            prediction,
            contrastive,
        }
    }

    /// `z_c`: mean of the graph encoder's hidden states over the mention tokens.
    pub fn candidate_repr<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        prepared: &PreparedSentence,
    ) -> Result<Vec<S>, ModelError> {
        let mut tape = Tape::new();
        let zeros = vec![0; prepared.ids.len()];
        let hidden = self
            .graph_encoder
            .encode_ids(&mut tape, store, &prepared.ids, &zeros)?;
        let pooled = tape.mean_rows(hidden, &prepared.mention);
        Ok(tape.value(pooled).data.clone())
    }

    /// Candidate scores without building gradients.
    pub fn score<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        prep: &PreparedInstance,
    ) -> Result<Vec<S>, ModelError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, store, prep)?;
        Ok(tape.value(out.scores).data.clone())
    }
}
