// microbenchmarks for the hot paths: sealing, canonical codec, handlers
#include <benchmark/benchmark.h>

#include "dcs/crypto.hpp"
#include "dcs/synchronizer.hpp"
#include "dcs/wire.hpp"

namespace {

using namespace dcs;

void BM_seal_open(benchmark::State& state) {
    SystemRng rng;
    const SymKey k = gen_sym_key(rng);
    const Bytes plaintext = rng.bytes(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        const SealedBox box = seal(plaintext, k, rng);
        benchmark::DoNotOptimize(open_box(box, k));
    }
    state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_seal_open)->Arg(64)->Arg(4096)->Arg(65536);

void BM_wrap_unwrap(benchmark::State& state) {
    SystemRng rng;
    const Identity receiver = gen_identity("r", rng);
    const SymKey k = gen_sym_key(rng);
    for (auto _ : state) {
        const Bytes wrapped = wrap_key(k, receiver.public_bundle, rng);
        benchmark::DoNotOptimize(unwrap_key(wrapped, receiver));
    }
}
BENCHMARK(BM_wrap_unwrap);

void BM_sign_verify(benchmark::State& state) {
    SystemRng rng;
    const Identity id = gen_identity("s", rng);
    const Bytes msg = rng.bytes(256);
    for (auto _ : state) {
        const Signature sig = sign(msg, id);
        benchmark::DoNotOptimize(verify(msg, sig, id.public_bundle));
    }
}
BENCHMARK(BM_sign_verify);

void BM_canonical_roundtrip(benchmark::State& state) {
    SystemRng rng;
    const wire::Send msg{"dossier-1",
                         "owner",
                         "receiver",
                         42,
                         rng.bytes(kSealNonceBytes),
                         rng.bytes(512),
                         rng.bytes(kSignatureBytes)};
    for (auto _ : state) {
        const Bytes b = wire::canonical_encode(msg);
        benchmark::DoNotOptimize(wire::decode(b));
    }
}
BENCHMARK(BM_canonical_roundtrip);

void BM_handler_send(benchmark::State& state) {
    SystemRng rng;
    const Identity owner = gen_identity("owner", rng);
    SyncState base;
    sync_apply(base, wire::Register{"owner", owner.public_bundle.enc_public,
                                    owner.public_bundle.sig_public});
    wire::Send send{"d", "owner", "r", 1, rng.bytes(kSealNonceBytes),
                    rng.bytes(512), {}};
    Version version = 1;
    for (auto _ : state) {
        state.PauseTiming();
        send.version = version++;
        const Bytes sb = wire::signing_bytes(send);
        send.signature = sign(sb, owner);
        state.ResumeTiming();
        benchmark::DoNotOptimize(sync_apply(base, send));
    }
}
BENCHMARK(BM_handler_send);

} // namespace

BENCHMARK_MAIN();
