use bevforecast::bev::{build_sample, GridSpec};
use bevforecast::config::Config;
use bevforecast::net::build_network;
use bevforecast::scenes::read_scenes;
use bevforecast::train::loss_and_gradients;
use std::fs::File;
use std::io::BufReader;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ckpt = args.get(1).map(String::as_str).unwrap_or("/tmp/clitest/q1d.bevf");
    let scene = args.get(2).map(String::as_str).unwrap_or("/tmp/clitest/desk_scene.bsc");
    let text = std::fs::read_to_string("/tmp/clitest/desk_e2e.cfg").unwrap();
    let cfg = Config::parse_str(&text).unwrap();
    let seq = read_scenes(BufReader::new(File::open(scene).unwrap())).unwrap();
    let gspec = GridSpec { ..cfg.grid };
    let net = if let Ok(bytes) = std::fs::read(ckpt) {
        bevforecast::train::read_checkpoint(&bytes).unwrap().net
    } else {
        build_network(&cfg.net_spec(), 42).unwrap()
    };
    for t in [7usize, 100, 500, 1000, 1500, 2000] {
        let s = build_sample(&seq, t, cfg.d, &gspec).unwrap();
        let (loss, grads) = loss_and_gradients(&net, &s.input, &s.target).unwrap();
        println!("t={t:5}  loss {loss:.4e}  grad_norm {:.4e}", grads.global_norm());
    }
}
