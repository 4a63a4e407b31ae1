#include "anonlab/suite.hpp"

#include <sodium.h>

#include <cstring>
#include <mutex>

namespace anonlab {

namespace {

void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw std::runtime_error("sodium_init failed");
    });
}

Bytes blake2b(std::span<const uint8_t> data, size_t outlen = 32) {
    Bytes out(outlen);
    crypto_generichash(out.data(), outlen, data.data(), data.size(), nullptr, 0);
    return out;
}

Bytes blake2b_concat(std::initializer_list<std::span<const uint8_t>> parts,
                     size_t outlen = 32) {
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, outlen);
    for (auto p : parts) crypto_generichash_update(&st, p.data(), p.size());
    Bytes out(outlen);
    crypto_generichash_final(&st, out.data(), outlen);
    return out;
}

constexpr size_t kMacSize = 16;

// Deterministic sealed box: ephemeral scalar derived from (recipient pk,
// plaintext), so identical inputs give identical ciphertexts.
// Layout: e_pk(32) || body(|m|) || mac(16).
Bytes seal_deterministic(const Bytes& pk, const Bytes& m) {
    Bytes ek_seed = blake2b_concat({std::span<const uint8_t>(to_bytes("anonlab.test.eph")),
                                    pk, m});
    uint8_t e_sk[crypto_scalarmult_SCALARBYTES];
    std::memcpy(e_sk, ek_seed.data(), sizeof e_sk);
    uint8_t e_pk[crypto_scalarmult_BYTES];
    crypto_scalarmult_base(e_pk, e_sk);

    uint8_t shared[crypto_scalarmult_BYTES];
    if (crypto_scalarmult(shared, e_sk, pk.data()) != 0)
        throw std::runtime_error("scalarmult failed");
    Bytes key = blake2b_concat({std::span<const uint8_t>(shared, sizeof shared),
                                std::span<const uint8_t>(e_pk, sizeof e_pk), pk});

    Bytes out(crypto_scalarmult_BYTES + m.size() + kMacSize);
    std::memcpy(out.data(), e_pk, sizeof e_pk);
    uint8_t nonce[crypto_stream_chacha20_NONCEBYTES] = {0};
    crypto_stream_chacha20_xor(out.data() + sizeof e_pk, m.data(), m.size(),
                               nonce, key.data());
    Bytes mac = blake2b_concat(
        {key, std::span<const uint8_t>(out.data() + sizeof e_pk, m.size())}, kMacSize);
    std::memcpy(out.data() + sizeof e_pk + m.size(), mac.data(), kMacSize);
    return out;
}

Bytes open_deterministic(const Bytes& sk_scalar, const Bytes& c) {
    if (c.size() < crypto_scalarmult_BYTES + kMacSize)
        throw DecryptError("ciphertext too short");
    const uint8_t* e_pk = c.data();
    const size_t body_len = c.size() - crypto_scalarmult_BYTES - kMacSize;
    const uint8_t* body = c.data() + crypto_scalarmult_BYTES;

    uint8_t my_pk[crypto_scalarmult_BYTES];
    crypto_scalarmult_base(my_pk, sk_scalar.data());
    uint8_t shared[crypto_scalarmult_BYTES];
    if (crypto_scalarmult(shared, sk_scalar.data(), e_pk) != 0)
        throw DecryptError("scalarmult failed");
    Bytes key = blake2b_concat(
        {std::span<const uint8_t>(shared, sizeof shared),
         std::span<const uint8_t>(e_pk, crypto_scalarmult_BYTES),
         std::span<const uint8_t>(my_pk, sizeof my_pk)});

    Bytes mac = blake2b_concat({key, std::span<const uint8_t>(body, body_len)}, kMacSize);
    if (sodium_memcmp(mac.data(), body + body_len, kMacSize) != 0)
        throw DecryptError("authentication failed");

    Bytes m(body_len);
    uint8_t nonce[crypto_stream_chacha20_NONCEBYTES] = {0};
    crypto_stream_chacha20_xor(m.data(), body, body_len, nonce, key.data());
    return m;
}

} // namespace

CipherSuite::CipherSuite(SuiteKind kind)
    : kind_(kind),
      name_(kind == SuiteKind::TestDeterministic ? "test-deterministic" : "real") {
    ensure_sodium();
}

KeyPair CipherSuite::generate_keypair(const std::string& id) const {
    KeyPair kp;
    kp.id = id;
    Bytes seed;
    if (kind_ == SuiteKind::TestDeterministic) {
        Bytes label = to_bytes("anonlab.test.key:" + id);
        seed = blake2b(label, crypto_box_SEEDBYTES);
    } else {
        seed.resize(crypto_box_SEEDBYTES);
        randombytes_buf(seed.data(), seed.size());
    }
    kp.public_part.resize(crypto_box_PUBLICKEYBYTES);
    kp.private_part.resize(crypto_box_SECRETKEYBYTES);
    crypto_box_seed_keypair(kp.public_part.data(), kp.private_part.data(), seed.data());
    return kp;
}

Bytes CipherSuite::encrypt(const Bytes& public_part, const Bytes& plaintext) const {
    if (plaintext.empty()) throw std::invalid_argument("encrypt: empty plaintext");
    if (public_part.size() != crypto_box_PUBLICKEYBYTES)
        throw std::invalid_argument("encrypt: bad public key size");
    if (kind_ == SuiteKind::TestDeterministic)
        return seal_deterministic(public_part, plaintext);
    Bytes out(plaintext.size() + crypto_box_SEALBYTES);
    crypto_box_seal(out.data(), plaintext.data(), plaintext.size(), public_part.data());
    return out;
}

Bytes CipherSuite::decrypt(const Bytes& private_part, const Bytes& ciphertext) const {
    if (private_part.size() != crypto_box_SECRETKEYBYTES)
        throw std::invalid_argument("decrypt: bad private key size");
    if (kind_ == SuiteKind::TestDeterministic)
        return open_deterministic(private_part, ciphertext);
    if (ciphertext.size() < crypto_box_SEALBYTES)
        throw DecryptError("ciphertext too short");
    Bytes pk(crypto_box_PUBLICKEYBYTES);
    crypto_scalarmult_base(pk.data(), private_part.data());
    Bytes m(ciphertext.size() - crypto_box_SEALBYTES);
    if (crypto_box_seal_open(m.data(), ciphertext.data(), ciphertext.size(),
                             pk.data(), private_part.data()) != 0)
        throw DecryptError("authentication failed");
    return m;
}

SharedSeed CipherSuite::derive_seed(const KeyPair& mine, const std::string& their_id,
                                    const Bytes& their_public) const {
    if (their_public.size() != crypto_box_PUBLICKEYBYTES)
        throw std::invalid_argument("derive_seed: bad public key size");
    uint8_t shared[crypto_scalarmult_BYTES];
    if (crypto_scalarmult(shared, mine.private_part.data(), their_public.data()) != 0)
        throw std::invalid_argument("derive_seed: scalarmult failed");

    // Hash in both public keys in a canonical order so the derivation is
    // symmetric in the pair.
    uint8_t my_pk[crypto_scalarmult_BYTES];
    crypto_scalarmult_base(my_pk, mine.private_part.data());
    std::span<const uint8_t> a(my_pk, sizeof my_pk);
    std::span<const uint8_t> b(their_public.data(), their_public.size());
    bool mine_first = std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());

    Bytes digest = blake2b_concat({std::span<const uint8_t>(to_bytes("anonlab.seed")),
                                   std::span<const uint8_t>(shared, sizeof shared),
                                   mine_first ? a : b, mine_first ? b : a});
    SharedSeed s;
    std::memcpy(s.bytes.data(), digest.data(), kSeedSize);
    if (mine.id <= their_id) {
        s.party_a = mine.id;
        s.party_b = their_id;
    } else {
        s.party_a = their_id;
        s.party_b = mine.id;
    }
    return s;
}

Bytes CipherSuite::prg(const SharedSeed& seed, uint64_t round_tag, size_t n) const {
    Bytes key_input(seed.bytes.begin(), seed.bytes.end());
    append_u64(key_input, round_tag);
    Bytes key = blake2b(key_input);
    Bytes out(n);
    uint8_t nonce[crypto_stream_chacha20_NONCEBYTES] = {0};
    if (n > 0) crypto_stream_chacha20(out.data(), n, nonce, key.data());
    return out;
}

Bytes CipherSuite::commit(const Bytes& nonce, std::span<const uint8_t> data) {
    ensure_sodium();
    return blake2b_concat({nonce, data});
}

Bytes CipherSuite::hash(std::span<const uint8_t> data) {
    ensure_sodium();
    return blake2b(data);
}

} // namespace anonlab
