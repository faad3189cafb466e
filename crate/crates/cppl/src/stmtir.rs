//! Abstract statement IR and the function decomposition algorithm.
//!
//! Function bodies are lowered to lists of abstract statements
//! (`checkpoint | call | if [stmt] [stmt] | other`); decomposition splits
//! them into indexed basic blocks of tagged statements where every
//! checkpoint and call sits at tail position. The algorithm is
//! implemented generically over an opaque payload so it can be
//! property-tested in isolation; payloads ride along untouched.

use std::collections::BTreeMap;

pub type BlockId = usize;

/// Where control continues after a checkpoint, call, or jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Next {
    /// The block stored in the current frame's return-address slot.
    Return,
    Block(BlockId),
}

/// `next+`: `Next` extended with "do nothing at the end of this list".
pub type NextPlus = Option<Next>;

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt<P> {
    Checkpoint(P),
    Call(P),
    If(P, Vec<Stmt<P>>, Vec<Stmt<P>>),
    Other(P),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TStmt<P> {
    Checkpoint(P, Next),
    Call(P, Next),
    If(P, Vec<TStmt<P>>, Vec<TStmt<P>>),
    Jump(Next),
    Other(P),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposed<P> {
    pub entry: BlockId,
    pub blocks: BTreeMap<BlockId, Vec<TStmt<P>>>,
}

struct Indices {
    counter: usize,
}

impl Indices {
    fn new_index(&mut self) -> usize {
        self.counter += 1;
        self.counter
    }
}

type Acc<P> = (Vec<TStmt<P>>, BTreeMap<BlockId, Vec<TStmt<P>>>, NextPlus);

fn init_next(ix: &mut Indices, next: NextPlus) -> Next {
    match next {
        None => Next::Block(ix.new_index()),
        Some(n) => n,
    }
}

/// Decomposes a statement list into basic blocks. The entry block is
/// added last and then renumbered to 0; the remaining blocks keep their
/// creation order starting at 1, so the output is stable.
pub fn decompose<P: Clone>(srcs: &[Stmt<P>]) -> Decomposed<P> {
    let mut ix = Indices { counter: 0 };
    let (block, mut blocks, _) = rec(&mut ix, (Vec::new(), BTreeMap::new(), Some(Next::Return)), srcs);
    let entry = ix.new_index();
    blocks.insert(entry, block);
    renumber(entry, blocks)
}

fn rec<P: Clone>(ix: &mut Indices, acc: Acc<P>, srcs: &[Stmt<P>]) -> Acc<P> {
    let (mut block, blocks, next) = acc;
    let (src, rest) = match srcs.split_first() {
        None => {
            match next {
                None => {}
                Some(n) => block.push(TStmt::Jump(n)),
            }
            return (block, blocks, next);
        }
        Some(x) => x,
    };
    match src {
        Stmt::Checkpoint(p) | Stmt::Call(p) => {
            let tag = |p: &P, n: Next| match src {
                Stmt::Checkpoint(_) => TStmt::Checkpoint(p.clone(), n),
                _ => TStmt::Call(p.clone(), n),
            };
            if rest.is_empty() {
                let n = init_next(ix, next);
                block.push(tag(p, n));
                (block, blocks, Some(n))
            } else {
                let index = ix.new_index();
                block.push(tag(p, Next::Block(index)));
                let seeded = init_next(ix, next);
                let (next_block, mut blocks, next) =
                    rec(ix, (Vec::new(), blocks, Some(seeded)), rest);
                blocks.insert(index, next_block);
                (block, blocks, next)
            }
        }
        Stmt::Other(p) => {
            block.push(TStmt::Other(p.clone()));
            rec(ix, (block, blocks, next), rest)
        }
        Stmt::If(p, thn, els) => {
            if rest.is_empty() {
                // nothing follows the if: pass the incoming next to the
                // first branch directly
                let (mut thn_t, thn_blocks, thn_next) =
                    rec(ix, (Vec::new(), blocks, next), thn);
                let (els_t, els_blocks, els_next) =
                    rec(ix, (Vec::new(), thn_blocks, thn_next), els);
                if next != els_next && thn_next.is_none() {
                    let target = els_next.expect("split branch yields a concrete next");
                    thn_t.push(TStmt::Jump(target));
                }
                block.push(TStmt::If(p.clone(), thn_t, els_t));
                (block, els_blocks, els_next)
            } else {
                // probe the branches with `none` to detect splits
                let (mut thn_t, thn_blocks, thn_next) =
                    rec(ix, (Vec::new(), blocks, None), thn);
                let (els_t, els_blocks, els_next) =
                    rec(ix, (Vec::new(), thn_blocks, thn_next), els);
                match els_next {
                    None => {
                        block.push(TStmt::If(p.clone(), thn_t, els_t));
                        rec(ix, (block, els_blocks, next), rest)
                    }
                    Some(rejoin) => {
                        // only the second branch split: the first needs a
                        // compensating jump to the rejoin block
                        if thn_next.is_none() {
                            thn_t.push(TStmt::Jump(rejoin));
                        }
                        let seeded = init_next(ix, next);
                        let (next_block, mut blocks, next) =
                            rec(ix, (Vec::new(), els_blocks, Some(seeded)), rest);
                        let rejoin_id = match rejoin {
                            Next::Block(i) => i,
                            Next::Return => {
                                unreachable!("branch splits always rejoin at a fresh block")
                            }
                        };
                        blocks.insert(rejoin_id, next_block);
                        block.push(TStmt::If(p.clone(), thn_t, els_t));
                        (block, blocks, next)
                    }
                }
            }
        }
    }
}

/// Renumbers so the entry block is 0 and the rest keep creation order.
fn renumber<P>(entry: BlockId, blocks: BTreeMap<BlockId, Vec<TStmt<P>>>) -> Decomposed<P> {
    let mut map: BTreeMap<BlockId, BlockId> = BTreeMap::new();
    map.insert(entry, 0);
    let mut k = 1;
    for id in blocks.keys() {
        if *id != entry {
            map.insert(*id, k);
            k += 1;
        }
    }
    let remap_next = |n: Next| match n {
        Next::Return => Next::Return,
        Next::Block(i) => Next::Block(map[&i]),
    };
    fn walk<P>(ts: Vec<TStmt<P>>, f: &impl Fn(Next) -> Next) -> Vec<TStmt<P>> {
        ts.into_iter()
            .map(|t| match t {
                TStmt::Checkpoint(p, n) => TStmt::Checkpoint(p, f(n)),
                TStmt::Call(p, n) => TStmt::Call(p, f(n)),
                TStmt::Jump(n) => TStmt::Jump(f(n)),
                TStmt::If(p, a, b) => TStmt::If(p, walk(a, f), walk(b, f)),
                TStmt::Other(p) => TStmt::Other(p),
            })
            .collect()
    }
    let blocks = blocks
        .into_iter()
        .map(|(id, ts)| (map[&id], walk(ts, &remap_next)))
        .collect();
    Decomposed { entry: 0, blocks }
}

/// True iff every checkpoint and call is the last element of its
/// enclosing statement list, recursively inside if branches.
pub fn check_tail_position<P>(blocks: &BTreeMap<BlockId, Vec<TStmt<P>>>) -> bool {
    blocks.values().all(|ts| list_ok(ts))
}

fn list_ok<P>(ts: &[TStmt<P>]) -> bool {
    for (i, t) in ts.iter().enumerate() {
        let last = i + 1 == ts.len();
        match t {
            TStmt::Checkpoint(..) | TStmt::Call(..) => {
                if !last {
                    return false;
                }
            }
            TStmt::If(_, a, b) => {
                if !list_ok(a) || !list_ok(b) {
                    return false;
                }
            }
            _ => {}
        }
    }
    true
}

/// All blocks reachable from the entry via jump/checkpoint/call targets
/// and if branches.
pub fn reachable_from_entry<P>(d: &Decomposed<P>) -> bool {
    use std::collections::BTreeSet;
    let mut seen: BTreeSet<BlockId> = BTreeSet::new();
    let mut work = vec![d.entry];
    while let Some(b) = work.pop() {
        if !seen.insert(b) {
            continue;
        }
        let Some(ts) = d.blocks.get(&b) else { continue };
        collect_targets(ts, &mut work);
    }
    d.blocks.keys().all(|k| seen.contains(k))
}

fn collect_targets<P>(ts: &[TStmt<P>], out: &mut Vec<BlockId>) {
    for t in ts {
        match t {
            TStmt::Checkpoint(_, Next::Block(i))
            | TStmt::Call(_, Next::Block(i))
            | TStmt::Jump(Next::Block(i)) => out.push(*i),
            TStmt::If(_, a, b) => {
                collect_targets(a, out);
                collect_targets(b, out);
            }
            _ => {}
        }
    }
}

/// Number of checkpoints and calls anywhere in a statement list,
/// including inside if branches.
pub fn split_points<P>(srcs: &[Stmt<P>]) -> usize {
    srcs.iter()
        .map(|s| match s {
            Stmt::Checkpoint(_) | Stmt::Call(_) => 1,
            Stmt::If(_, a, b) => split_points(a) + split_points(b),
            Stmt::Other(_) => 0,
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testsupport::{flatten_blocks, flatten_stmts, gen_stmts, max_if_id};
    use rand::SeedableRng;

    fn o(id: u32) -> Stmt<u32> {
        Stmt::Other(id)
    }

    /// The worked example: the statement list of the recursive function
    /// with one checkpoint and one recursive call nested under two ifs.
    fn worked_example() -> Vec<Stmt<u32>> {
        vec![
            o(0),
            Stmt::Checkpoint(1),
            o(2),
            Stmt::If(3, vec![o(4)], vec![o(5)]),
            o(6),
            Stmt::If(
                7,
                vec![o(8), Stmt::If(9, vec![o(10)], vec![Stmt::Call(11)]), o(12)],
                vec![o(13)],
            ),
            o(14),
        ]
    }

    #[test]
    fn worked_example_block_structure() {
        let d = decompose(&worked_example());
        assert_eq!(d.blocks.len(), 4);
        assert_eq!(d.entry, 0);

        // entry: [other, checkpoint -> 1]
        let b0 = &d.blocks[&0];
        assert_eq!(b0.len(), 2);
        assert!(matches!(b0[0], TStmt::Other(0)));
        assert!(matches!(b0[1], TStmt::Checkpoint(1, Next::Block(1))));

        // block 1: [other, if [other] [other], other, if [ other, if [other, jump 2] [call 2] ] [other, jump 3]]
        let b1 = &d.blocks[&1];
        assert_eq!(b1.len(), 4);
        assert!(matches!(b1[0], TStmt::Other(2)));
        let TStmt::If(3, inner_thn, inner_els) = &b1[1] else {
            panic!("expected intra-block if, got {:?}", b1[1]);
        };
        assert_eq!(inner_thn, &vec![TStmt::Other(4)]);
        assert_eq!(inner_els, &vec![TStmt::Other(5)]);
        assert!(matches!(b1[2], TStmt::Other(6)));
        let TStmt::If(7, thn, els) = &b1[3] else {
            panic!("expected splitting if, got {:?}", b1[3]);
        };
        assert_eq!(
            thn,
            &vec![
                TStmt::Other(8),
                TStmt::If(
                    9,
                    vec![TStmt::Other(10), TStmt::Jump(Next::Block(2))],
                    vec![TStmt::Call(11, Next::Block(2))],
                ),
            ]
        );
        assert_eq!(els, &vec![TStmt::Other(13), TStmt::Jump(Next::Block(3))]);

        // block 2: [other, jump 3]
        assert_eq!(
            d.blocks[&2],
            vec![TStmt::Other(12), TStmt::Jump(Next::Block(3))]
        );
        // block 3: [other, jump return]
        assert_eq!(
            d.blocks[&3],
            vec![TStmt::Other(14), TStmt::Jump(Next::Return)]
        );
        assert!(check_tail_position(&d.blocks));
        assert!(reachable_from_entry(&d));
    }

    #[test]
    fn single_other_yields_one_block() {
        let d = decompose(&[o(0)]);
        assert_eq!(d.blocks.len(), 1);
        assert_eq!(
            d.blocks[&0],
            vec![TStmt::Other(0), TStmt::Jump(Next::Return)]
        );
    }

    #[test]
    fn tail_checkpoint_gets_return() {
        let d = decompose(&[Stmt::Checkpoint(0u32)]);
        assert_eq!(d.blocks.len(), 1);
        assert_eq!(d.blocks[&0], vec![TStmt::Checkpoint(0, Next::Return)]);
    }

    #[test]
    fn tail_position_violation_detected() {
        let mut blocks: BTreeMap<BlockId, Vec<TStmt<u32>>> = BTreeMap::new();
        blocks.insert(0, vec![TStmt::Checkpoint(0, Next::Block(1)), TStmt::Other(1)]);
        assert!(!check_tail_position(&blocks));
    }

    #[test]
    fn no_split_points_means_single_block() {
        let srcs = vec![
            o(0),
            Stmt::If(1, vec![o(2), Stmt::If(3, vec![o(4)], vec![])], vec![o(5)]),
            o(6),
        ];
        assert_eq!(split_points(&srcs), 0);
        let d = decompose(&srcs);
        assert_eq!(d.blocks.len(), 1);
    }

    /// Exhaustive branch-vector equivalence between the input statement
    /// list and its decomposition, plus the structural invariants, over
    /// randomly generated programs.
    #[test]
    fn generated_programs_preserve_semantics() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let srcs = gen_stmts(&mut rng, 3);
            let d = decompose(&srcs);
            assert!(check_tail_position(&d.blocks), "tail violation for {:?}", srcs);
            assert!(reachable_from_entry(&d), "unreachable block for {:?}", srcs);
            if split_points(&srcs) == 0 {
                assert_eq!(d.blocks.len(), 1, "no-split input got >1 block: {:?}", srcs);
            }
            let nifs = max_if_id(&srcs);
            if nifs <= 4 {
                for vector in 0..(1u32 << nifs) {
                    let dec = |ifid: u32| vector & (1 << ifid) != 0;
                    let a = flatten_stmts(&srcs, &dec);
                    let b = flatten_blocks(&d, &dec);
                    assert_eq!(a, b, "semantics diverge for {:?} vector {:b}", srcs, vector);
                }
            }
        }
    }
}
