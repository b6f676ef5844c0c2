use amanat_core::compiler::{compile, decode_binary, encode_binary};
use amanat_core::minisrc::parse_program;
use amanat_testkit::gen::{long_internal_names, random_program, render, GenConfig, RenderStyle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn build(text: &str) -> Vec<u8> {
    encode_binary(&compile(&parse_program(text).unwrap()).unwrap())
}

#[test]
fn compilation_is_deterministic_and_strips_surface_detail() {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let cfg = GenConfig::default();
    for _ in 0..100 {
        let (p, _) = random_program(&mut rng, &cfg);
        let plain = render(&p, &RenderStyle::default());
        let a = build(&plain);
        assert_eq!(a, build(&plain));

        let names = long_internal_names(&mut rng, p.internals.len());
        let dressed = render(
            &p,
            &RenderStyle {
                comments: true,
                internal_names: Some(names),
                interface_rename: None,
            },
        );
        assert_ne!(plain, dressed);
        assert_eq!(a, build(&dressed), "{dressed}");

        let interface: Vec<&String> = p.inputs.iter().chain(&p.outputs).collect();
        let victim = interface[rng.gen_range(0..interface.len())].clone();
        let renamed = render(
            &p,
            &RenderStyle {
                interface_rename: Some((victim, "renamed_port".into())),
                ..RenderStyle::default()
            },
        );
        assert_ne!(a, build(&renamed));
    }
}

#[test]
fn decoded_interface_matches_declarations() {
    let mut rng = ChaCha20Rng::seed_from_u64(22);
    for _ in 0..100 {
        let (p, _) = random_program(&mut rng, &GenConfig::default());
        let image = decode_binary(&build(&render(&p, &RenderStyle::default()))).unwrap();
        assert_eq!(image.inputs, p.inputs);
        assert_eq!(image.outputs, p.outputs);
        assert_eq!(image.var_count as usize, p.variable_count());
        assert_eq!(image, compile(&p).unwrap());
    }
}

#[test]
fn whitespace_layout_does_not_matter() {
    let a = build("input x; output y; var t; t = x * 2; if (t < 9) { y = t; } else { y = 0; }");
    let b = build("input   x;\n\toutput y;\nvar t;\n\nt=x*2;\nif(t<9){y=t;}else{y=0;}\n");
    assert_eq!(a, b);
}
