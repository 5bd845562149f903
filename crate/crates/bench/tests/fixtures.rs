use tonefair_bench::{dataset, model, tensors};

#[test]
fn fixtures_line_up() {
    let d = dataset(16, 2);
    assert_eq!(d.len(), 12);
    let m = model(16);
    let xs = tensors(&m, &d, 5);
    assert_eq!(xs.len(), 5);
    assert!(xs.iter().all(|x| (x.c, x.h, x.w) == (3, 16, 16)));
    assert_eq!(m.forward_one(&xs[0]).unwrap().probs.len(), 5);
}
