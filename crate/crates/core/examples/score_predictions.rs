//! Score hand-written predictions, with and without collapsing POS and COMB.
//!
//! cargo run --example score_predictions

use combex::corpus::Label;
use combex::eval::{evaluate, score_relations};
use combex::linearizer::{Mode, NamedRelation, NamedRelations};

fn set(rels: &[(&[&str], Label)]) -> NamedRelations {
    rels.iter()
        .map(|(d, l)| NamedRelation::new(d.iter().copied(), *l))
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let golds = vec![
        set(&[
            (&["apalutamide", "ADT"], Label::Pos),
            (&["enzalutamide", "ADT"], Label::Pos),
        ]),
        set(&[(&["lamotrigine", "carbamazepine"], Label::Nocomb)]),
    ];
    let preds = vec![
        set(&[
            (&["apalutamide", "ADT"], Label::Pos),
            (&["enzalutamide", "ADT"], Label::Comb),
        ]),
        set(&[(&["lamotrigine", "carbamazepine"], Label::Comb)]),
    ];
    let report = evaluate(&preds, &golds, Mode::ThreeWay)?;
    println!("{}", report.to_json());
    for (name, s) in &report.classes {
        println!("{name:<9} p {:.3} r {:.3} f1 {:.3}", s.p, s.r, s.f1);
    }
    let nocomb = score_relations(&preds, &golds, &[Label::Nocomb])?;
    println!("NOCOMB alone: f1 {:.3}", nocomb.micro.f1);
    Ok(())
}
