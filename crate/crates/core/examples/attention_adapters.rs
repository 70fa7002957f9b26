//! The adapter self-attention and the gated audio cross-attention on a toy
//! sequence: fresh adapters are inert, trained ones change only what they should.

use audcast::h2_dit::{adapter_self_attention, audio_cross_attention, AudioAttentionWeights, SelfAttentionWeights};
use audcast::numerics::{Graph, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const E: usize = 8;
const HEADS: usize = 2;
const ID: usize = 4;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::randn(&[6, E], 1.0, &mut rng);
    let r = Tensor::randn(&[4, E], 1.0, &mut rng);
    let f = Tensor::randn(&[3, ID], 1.0, &mut rng);
    // Rows 2 and 3 are "head" tokens.
    let gate = Tensor::new(vec![6], vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0])?;

    let mut store = ParamStore::new();
    let w = SelfAttentionWeights::new(&mut store, "attn", E, true, Some(ID), &mut ChaCha8Rng::seed_from_u64(1))?;
    let mut plain_store = ParamStore::new();
    let plain = SelfAttentionWeights::new(&mut plain_store, "attn", E, false, None, &mut ChaCha8Rng::seed_from_u64(1))?;

    let run = |store: &ParamStore, w: &SelfAttentionWeights, adapters: bool| -> anyhow::Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let gv = g.constant(gate.clone());
        let (rv, fv) = if adapters {
            (Some(g.constant(r.clone())), Some(g.constant(f.clone())))
        } else {
            (None, None)
        };
        let y = adapter_self_attention(&mut g, store, xv, rv, fv, gv, w, HEADS)?;
        Ok(g.value(y).clone())
    };

    let vanilla = run(&plain_store, &plain, false)?;
    let fresh = run(&store, &w, true)?;
    println!("fresh adapters vs vanilla attention: max diff {:.1e}", fresh.max_abs_diff(&vanilla));

    // Give the identity adapter a value projection: only gated rows move.
    let (_, wv_f) = w.identity.unwrap();
    store.get_mut(wv_f.w).tensor = Tensor::randn(&[ID, E], 0.5, &mut rng);
    let with_id = run(&store, &w, true)?;
    for row in 0..6 {
        let d: f64 = (0..E).map(|c| (with_id.at2(row, c) - fresh.at2(row, c)).abs()).fold(0.0, f64::max);
        println!("row {row} gate {} identity change {d:.3e}", gate.data()[row]);
    }

    let mut astore = ParamStore::new();
    let aw = AudioAttentionWeights::new(&mut astore, "xattn", E, false, &mut rng)?;
    let audio = Tensor::randn(&[5, E], 1.0, &mut rng);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let av = g.constant(audio);
    let gv = g.constant(gate.clone());
    let y = audio_cross_attention(&mut g, &astore, xv, xv, av, gv, &aw, HEADS)?;
    let y = g.value(y).clone();
    for row in 0..6 {
        let d: f64 = (0..E).map(|c| (y.at2(row, c) - x.at2(row, c)).abs()).fold(0.0, f64::max);
        println!("row {row} gate {} audio change {d:.3e}", gate.data()[row]);
    }
    Ok(())
}
