//! Confusion matrix and per-class scores for a set of predictions.

use flowssl::eval::evaluate;

fn main() -> flowssl::Result<()> {
    let names: Vec<String> = ["web", "dns", "video"].iter().map(|s| s.to_string()).collect();
    let truth = [0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 2];
    let pred = [0, 0, 1, 0, 1, 1, 0, 2, 2, 2, 1, 2];
    let r = evaluate(&truth, &pred, &names)?;
    println!("confusion (rows true, columns predicted):");
    for (name, row) in names.iter().zip(&r.confusion.counts) {
        println!("  {name:<6} {row:?}");
    }
    println!("class   precision  recall  f1      support");
    for (name, c) in names.iter().zip(&r.per_class) {
        println!("{name:<7} {:.4}     {:.4}  {:.4}  {}", c.precision, c.recall, c.f1, c.support);
    }
    println!("accuracy {:.4}  macro F1 {:.4}  weighted F1 {:.4}", r.accuracy, r.macro_avg.f1, r.weighted_avg.f1);
    Ok(())
}
