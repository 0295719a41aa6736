//! Every example runs to completion.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::run().unwrap();
        }
    };
}

example!(kernels);
example!(spin_algebra);
example!(coefficients);
example!(quadratic_flow);
example!(linear_solver);
example!(stability_solve);
example!(grassmann_integrals);
example!(partition_function);
example!(polymer_weights);
example!(local_extraction);
example!(mayer_expansion);
example!(run_config);
